//! System parameters of the subarray-switching downlink.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Cell, array partition and link-budget parameters.
///
/// Path loss and noise are stored in linear scale; [`db_to_linear`] and
/// [`dbm_to_watts`] convert from the units used in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Side of the square cell, metres.
    pub cell_size_m: f64,
    /// Total antennas `M`.
    pub num_antennas: usize,
    /// Total RF transceivers `N`.
    pub num_rf: usize,
    /// Number of subarrays `B`.
    pub num_subarrays: usize,
    /// Single-antenna users `K`.
    pub num_users: usize,
    /// Transmit power budget, watts.
    pub max_power_w: f64,
    /// Path loss at the 1 m reference distance, linear.
    pub ref_path_loss: f64,
    /// Path-loss exponent.
    pub path_loss_exp: f64,
    /// Noise power, watts.
    pub noise_power_w: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

impl SystemConfig {
    /// Full-scale parameters: L = 30 m, M = 512, N = 256, B = 8, K = 50,
    /// P_max = 230 uW, q0 = -35.3 dB, kappa = 3, noise = -96 dBm.
    pub fn full_scale() -> Self {
        Self {
            cell_size_m: 30.0,
            num_antennas: 512,
            num_rf: 256,
            num_subarrays: 8,
            num_users: 50,
            max_power_w: 230e-6,
            ref_path_loss: db_to_linear(-35.3),
            path_loss_exp: 3.0,
            noise_power_w: dbm_to_watts(-96.0),
        }
    }

    /// Scaled-down array (M = 128, B = 4, N = 64, K = 20) with the full-scale
    /// link budget.
    pub fn desk_scale() -> Self {
        Self {
            num_antennas: 128,
            num_rf: 64,
            num_subarrays: 4,
            num_users: 20,
            ..Self::full_scale()
        }
    }

    pub fn antennas_per_subarray(&self) -> usize {
        self.num_antennas / self.num_subarrays
    }

    pub fn rf_per_subarray(&self) -> usize {
        self.num_rf / self.num_subarrays
    }

    /// Global antenna indices of subarray `b` (0-based).
    pub fn subarray_range(&self, b: usize) -> Range<usize> {
        let mb = self.antennas_per_subarray();
        b * mb..(b + 1) * mb
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: String| Err(ConfigError::Invalid(msg));
        if self.num_antennas == 0
            || self.num_rf == 0
            || self.num_subarrays == 0
            || self.num_users == 0
        {
            return fail("antenna, RF, subarray and user counts must all be >= 1".into());
        }
        if self.num_antennas % self.num_subarrays != 0 {
            return fail(format!(
                "num_antennas = {} is not divisible by num_subarrays = {}",
                self.num_antennas, self.num_subarrays
            ));
        }
        if self.num_rf % self.num_subarrays != 0 {
            return fail(format!(
                "num_rf = {} is not divisible by num_subarrays = {}",
                self.num_rf, self.num_subarrays
            ));
        }
        if self.rf_per_subarray() > self.antennas_per_subarray() {
            return fail(format!(
                "rf per subarray ({}) exceeds antennas per subarray ({})",
                self.rf_per_subarray(),
                self.antennas_per_subarray()
            ));
        }
        for (name, v) in [
            ("cell_size_m", self.cell_size_m),
            ("max_power_w", self.max_power_w),
            ("ref_path_loss", self.ref_path_loss),
            ("path_loss_exp", self.path_loss_exp),
            ("noise_power_w", self.noise_power_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return fail(format!("{name} must be positive and finite, got {v}"));
            }
        }
        Ok(())
    }
}
