//! Physical parameters and the closed-form pieces of the readout model:
//! thermal occupation, transition rates with and without the readout drive,
//! and the per-bin pointer SNR.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planck constant over Boltzmann constant, in kelvin per gigahertz.
pub const H_OVER_KB_K_PER_GHZ: f64 = 0.047_992_430_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
}

fn check(ok: bool, name: &'static str, value: f64, reason: &'static str) -> Result<(), ModelError> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { name, value, reason })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QubitParams {
    /// Intrinsic relaxation time with the readout off, in µs.
    pub t1_idle_us: f64,
    /// Qubit transition frequency, in GHz.
    pub f01_ghz: f64,
    /// Effective bath temperature, in mK.
    pub t_eff_mk: f64,
    /// Extra upward rate while the readout drive is on, in 1/µs.
    pub gamma_up_readout_per_us: f64,
    /// Probability that a π pulse leaves the state unchanged.
    pub pi_pulse_error: f64,
}

impl Default for QubitParams {
    fn default() -> Self {
        Self {
            t1_idle_us: 1.8,
            f01_ghz: 7.80,
            t_eff_mk: 88.0,
            gamma_up_readout_per_us: 0.015,
            pi_pulse_error: 0.015,
        }
    }
}

impl QubitParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.t1_idle_us > 0.0, "qubit.t1_idle_us", self.t1_idle_us, "must be > 0")?;
        check(self.f01_ghz > 0.0, "qubit.f01_ghz", self.f01_ghz, "must be > 0")?;
        check(self.t_eff_mk >= 0.0, "qubit.t_eff_mk", self.t_eff_mk, "must be >= 0")?;
        check(
            self.gamma_up_readout_per_us >= 0.0,
            "qubit.gamma_up_readout_per_us",
            self.gamma_up_readout_per_us,
            "must be >= 0",
        )?;
        check(
            (0.0..1.0).contains(&self.pi_pulse_error),
            "qubit.pi_pulse_error",
            self.pi_pulse_error,
            "must lie in [0, 1)",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutParams {
    /// Mean cavity photon number.
    pub nbar: f64,
    /// Digitizer bin, in ns.
    pub sample_dt_ns: f64,
    /// Single-pole bandwidth of the cavity plus amplifier chain, in MHz.
    pub system_bandwidth_mhz: f64,
    /// Distance between the ground and excited pointer means.
    pub pointer_separation: f64,
    /// `a` in SNR(n̄) = a·√n̄.
    pub snr_calibration: f64,
    /// Main readout turn-on, in ns.
    pub ringup_start_ns: f64,
    /// Settling time after turn-on before the first discrimination marker, in ns.
    pub equilibration_time_ns: f64,
    /// Photon number above which readout backaction shortens T1.
    pub backaction_knee: f64,
    pub backaction_exponent: f64,
}

/// Per-bin SNR of 6.5 at n̄ = 14.6.
pub const DEFAULT_SNR_CALIBRATION: f64 = 1.701_127_748_418_194_6;

impl Default for ReadoutParams {
    fn default() -> Self {
        Self {
            nbar: 14.6,
            sample_dt_ns: 10.0,
            system_bandwidth_mhz: 7.0,
            pointer_separation: 1.0,
            snr_calibration: DEFAULT_SNR_CALIBRATION,
            ringup_start_ns: 300.0,
            equilibration_time_ns: 90.0,
            backaction_knee: 100.0,
            backaction_exponent: 1.0,
        }
    }
}

impl ReadoutParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.nbar >= 0.0, "readout.nbar", self.nbar, "must be >= 0")?;
        check(self.sample_dt_ns > 0.0, "readout.sample_dt_ns", self.sample_dt_ns, "must be > 0")?;
        check(
            self.system_bandwidth_mhz > 0.0,
            "readout.system_bandwidth_mhz",
            self.system_bandwidth_mhz,
            "must be > 0",
        )?;
        check(
            self.pointer_separation > 0.0,
            "readout.pointer_separation",
            self.pointer_separation,
            "must be > 0",
        )?;
        check(
            self.snr_calibration > 0.0,
            "readout.snr_calibration",
            self.snr_calibration,
            "must be > 0",
        )?;
        check(self.ringup_start_ns >= 0.0, "readout.ringup_start_ns", self.ringup_start_ns, "must be >= 0")?;
        check(
            self.equilibration_time_ns >= 0.0,
            "readout.equilibration_time_ns",
            self.equilibration_time_ns,
            "must be >= 0",
        )?;
        check(self.backaction_knee > 0.0, "readout.backaction_knee", self.backaction_knee, "must be > 0")?;
        check(
            self.backaction_exponent >= 0.0,
            "readout.backaction_exponent",
            self.backaction_exponent,
            "must be >= 0",
        )
    }

    /// Time constant of the single-pole response, τ = 1/(2π·B), in ns.
    pub fn tau_sys_ns(&self) -> f64 {
        1.0e3 / (2.0 * std::f64::consts::PI * self.system_bandwidth_mhz)
    }

    /// Noise standard deviation of one bin. Infinite when the SNR is zero.
    pub fn sigma_bin(&self) -> f64 {
        self.pointer_separation / pointer_snr(self)
    }

    /// Delay between a pointer step and the filtered signal crossing the
    /// midpoint, τ·ln 2.
    pub fn midpoint_delay_ns(&self) -> f64 {
        self.tau_sys_ns() * std::f64::consts::LN_2
    }
}

/// Upward and downward transition rates, in 1/µs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RatePair {
    pub gamma_up: f64,
    pub gamma_down: f64,
}

impl RatePair {
    pub const ZERO: RatePair = RatePair {
        gamma_up: 0.0,
        gamma_down: 0.0,
    };

    pub fn new(gamma_up: f64, gamma_down: f64) -> Self {
        Self { gamma_up, gamma_down }
    }

    /// Relaxation time of the ensemble average, 1/(Γ↑ + Γ↓), in µs.
    pub fn t1_us(&self) -> f64 {
        1.0 / (self.gamma_up + self.gamma_down)
    }
}

/// Two-level Boltzmann occupation of the excited state.
pub fn thermal_population(qubit: &QubitParams) -> f64 {
    if qubit.t_eff_mk <= 0.0 {
        return 0.0;
    }
    let x = H_OVER_KB_K_PER_GHZ * qubit.f01_ghz / (qubit.t_eff_mk * 1.0e-3);
    // e^-x / (1 + e^-x), written to stay finite for large x
    1.0 / (1.0 + x.exp())
}

/// Transition rates with the readout drive off or on.
///
/// With the drive off the total relaxation rate is 1/T1, split between up and
/// down so the stationary excited fraction equals [`thermal_population`].
/// With the drive on, Γ↑ gains `gamma_up_readout_per_us` and Γ↓ gains the
/// backaction term `(1/T1)·((n̄ − n_c)/n_c)^p`, which vanishes at or below the
/// knee `n_c`.
pub fn effective_rates(
    qubit: &QubitParams,
    readout: &ReadoutParams,
    readout_on: bool,
) -> Result<RatePair, ModelError> {
    check(readout.nbar >= 0.0, "readout.nbar", readout.nbar, "must be >= 0")?;
    let p_th = thermal_population(qubit);
    let relax = 1.0 / qubit.t1_idle_us;
    let mut rates = RatePair {
        gamma_up: relax * p_th,
        gamma_down: relax * (1.0 - p_th),
    };
    if readout_on {
        rates.gamma_up += qubit.gamma_up_readout_per_us;
        rates.gamma_down += relax * backaction_factor(readout);
    }
    Ok(rates)
}

fn backaction_factor(readout: &ReadoutParams) -> f64 {
    let excess = (readout.nbar - readout.backaction_knee) / readout.backaction_knee;
    if excess > 0.0 {
        excess.powf(readout.backaction_exponent)
    } else {
        0.0
    }
}

/// Per-bin SNR, pointer separation over the single-bin noise σ.
pub fn pointer_snr(readout: &ReadoutParams) -> f64 {
    readout.snr_calibration * readout.nbar.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thermal_population_at_88_mk() {
        // direct evaluation: x = 0.0479924 * 7.8 / 0.088 = 4.25387, p = 1/(1+e^x)
        let p = thermal_population(&QubitParams::default());
        assert!((p - 0.0140).abs() < 2e-4, "p = {p}");
        assert!((p - 0.014_010).abs() < 1e-5, "p = {p}");
    }

    #[test]
    fn thermal_population_limits() {
        let cold = QubitParams {
            t_eff_mk: 0.0,
            ..Default::default()
        };
        assert_eq!(thermal_population(&cold), 0.0);
        let hot = QubitParams {
            t_eff_mk: 1.0e12,
            ..Default::default()
        };
        assert!((thermal_population(&hot) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn idle_rates_without_thermal_channel() {
        let qubit = QubitParams {
            t_eff_mk: 0.0,
            ..Default::default()
        };
        let r = effective_rates(&qubit, &ReadoutParams::default(), false).unwrap();
        assert_eq!(r.gamma_up, 0.0);
        assert!((r.gamma_down - 1.0 / 1.8).abs() < 1e-15);
    }

    #[test]
    fn readout_t1_above_one_and_a_half_us_below_knee() {
        let r = effective_rates(&QubitParams::default(), &ReadoutParams::default(), true).unwrap();
        assert!(r.t1_us() >= 1.5, "T1 during readout = {}", r.t1_us());
    }

    #[test]
    fn readout_t1_collapses_far_above_knee() {
        let readout = ReadoutParams {
            nbar: 400.0,
            ..Default::default()
        };
        let r = effective_rates(&QubitParams::default(), &readout, true).unwrap();
        // Γ↓ = (1 - p)/1.8 + 3/1.8, Γ↑ = p/1.8 + 0.015  ->  T1 ≈ 0.447 µs
        assert!(r.t1_us() < 1.5);
        assert!((r.t1_us() - 1.0 / (4.0 / 1.8 + 0.015)).abs() < 1e-9);
    }

    #[test]
    fn negative_nbar_rejected() {
        let readout = ReadoutParams {
            nbar: -1.0,
            ..Default::default()
        };
        let err = effective_rates(&QubitParams::default(), &readout, true).unwrap_err();
        assert!(err.to_string().contains("readout.nbar"));
    }

    #[test]
    fn snr_scaling() {
        let base = ReadoutParams::default();
        assert_eq!(pointer_snr(&ReadoutParams { nbar: 0.0, ..base }), 0.0);
        let s1 = pointer_snr(&base);
        let s4 = pointer_snr(&ReadoutParams {
            nbar: 4.0 * base.nbar,
            ..base
        });
        assert_eq!(s4, 2.0 * s1);
    }

    #[test]
    fn default_tau_sys() {
        let tau = ReadoutParams::default().tau_sys_ns();
        assert!((tau - 22.736).abs() < 1e-3);
    }
}
