//! Physical scenario description: node geometry, array regions, path-loss
//! model, power/noise budgets and solver controls.
//!
//! All config keys carry explicit units in their names (`*_m`, `*_db`,
//! `*_dbm`, `*_bps_hz`, ...). Quantities are stored in the units they are
//! usually quoted in (dB/dBm for gains and powers) and converted to linear
//! watts on demand, so a TOML round trip reproduces the file exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifies one propagation link of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkId {
    /// Transmit array → surface (matrix H, N×M_t).
    BsRis,
    /// Surface → receive array (matrix G, M_r×N).
    RisBs,
    /// Transmit array → downlink user (row h_d).
    BsDl,
    /// Uplink user → receive array (column h_u).
    UlBs,
    /// Surface → downlink user (row h̃).
    RisDl,
    /// Uplink user → surface (column g).
    UlRis,
    /// Transmit array → receive array loopback (matrix F).
    SelfInterference,
    /// Uplink user → downlink user (scalar).
    InterUser,
}

/// Per-link large-scale path-loss exponents.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PathLossExponents {
    pub bs_ris: f64,
    pub bs_dl: f64,
    pub bs_ul: f64,
    pub ris_dl: f64,
    pub ris_ul: f64,
    pub ul_dl: f64,
}

impl Default for PathLossExponents {
    fn default() -> Self {
        Self {
            bs_ris: 2.1,
            bs_dl: 3.5,
            bs_ul: 3.5,
            ris_dl: 2.2,
            ris_ul: 2.2,
            ul_dl: 3.7,
        }
    }
}

/// Tolerances, iteration caps and trust-region controls for the optimizer
/// stack. Every field has a sensible default; configs only override what
/// they need.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverControls {
    /// Outer alternating-optimization stop: ΔR_sum ≤ this ⇒ converged.
    pub ao_tol_bps_hz: f64,
    /// Outer alternating-optimization iteration cap.
    pub ao_max_iterations: usize,
    /// Inner successive-linearization iterations per block per outer round.
    pub sca_inner_iterations: usize,
    /// Rank-ratio stop for the beamformer rank-one recovery loop.
    pub srocr_tol: f64,
    /// Iteration cap for the rank-one recovery loop.
    pub srocr_max_iterations: usize,
    /// Fixed-point refresh rounds of the auxiliary variables per beamformer
    /// update.
    pub fp_refresh_rounds: usize,
    /// Relative duality-gap / residual tolerance of the SDP solver.
    pub sdp_tol: f64,
    /// Residual tolerance of the trust-region LP solver.
    pub trlp_tol: f64,
    /// Initial trust radius for the phase block (radians).
    pub trust_init_phase_rad: f64,
    /// Initial trust radius for position blocks, in wavelengths.
    pub trust_init_position_wavelengths: f64,
    /// Trust radii never shrink below this.
    pub trust_min: f64,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            ao_tol_bps_hz: 1e-3,
            ao_max_iterations: 50,
            sca_inner_iterations: 10,
            srocr_tol: 1e-3,
            srocr_max_iterations: 30,
            fp_refresh_rounds: 5,
            sdp_tol: 1e-7,
            trlp_tol: 1e-8,
            trust_init_phase_rad: 0.25,
            trust_init_position_wavelengths: 0.25,
            trust_min: 1e-6,
        }
    }
}

/// Full physical + solver configuration of one scenario.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScenarioConfig {
    /// Transmit antennas at the base station (M_t).
    pub tx_antennas: usize,
    /// Receive antennas at the base station (M_r).
    pub rx_antennas: usize,
    /// Surface elements (N).
    pub ris_elements: usize,
    /// Carrier wavelength λ.
    pub wavelength_m: f64,
    /// Side length A of the square movement region (same for all arrays).
    pub region_side_m: f64,
    /// Minimum pairwise element spacing d0 within an array.
    pub min_separation_m: f64,

    /// Base-station reference position (transmit and receive arrays).
    pub bs_position_m: [f64; 3],
    /// Surface reference position.
    pub ris_position_m: [f64; 3],
    /// Uplink user position.
    pub ul_user_position_m: [f64; 3],
    /// Downlink user position.
    pub dl_user_position_m: [f64; 3],

    /// Resolvable paths per spatial link (L).
    pub paths_per_link: usize,
    /// Reference channel gain β0 at 1 m, in dB.
    pub ref_path_gain_db: f64,
    /// Per-link path-loss exponents.
    #[serde(default)]
    pub path_loss_exponents: PathLossExponents,
    /// Total loopback (self-interference) channel gain in dB.
    pub si_gain_db: f64,
    /// Residual self-interference factor η after cancellation, linear in
    /// [0, 1].
    pub si_residual: f64,

    /// Noise power spectral density in dBm/Hz.
    pub noise_density_dbm_per_hz: f64,
    /// System bandwidth; rates are per-Hz, so this only scales the noise
    /// floor.
    pub bandwidth_hz: f64,
    /// Base-station transmit power budget.
    pub power_bs_max_dbm: f64,
    /// Uplink user transmit power budget.
    pub power_ul_max_dbm: f64,
    /// Downlink rate requirement.
    pub rate_min_dl_bps_hz: f64,
    /// Uplink rate requirement.
    pub rate_min_ul_bps_hz: f64,

    /// Solver tolerances and caps.
    #[serde(default)]
    pub solver: SolverControls,
}

/// Problems a config can have; reported with enough context to fix the file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be at least 1")]
    ZeroCount { name: &'static str },
    #[error("si_residual must lie in [0, 1], got {0}")]
    SiResidualRange(f64),
    #[error(
        "movement region {region_side_m} m holds at most {capacity} elements \
         at spacing {min_separation_m} m, but {requested} were requested"
    )]
    RegionTooSmall {
        region_side_m: f64,
        min_separation_m: f64,
        capacity: usize,
        requested: usize,
    },
    #[error("rate requirement {name} must be non-negative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
}

impl ScenarioConfig {
    /// CI-sized profile: small arrays, few paths, fast to optimize.
    pub fn desk() -> Self {
        Self {
            tx_antennas: 4,
            rx_antennas: 2,
            ris_elements: 16,
            wavelength_m: 0.1,
            region_side_m: 0.4,
            min_separation_m: 0.05,
            bs_position_m: [5.0, 0.0, 15.0],
            ris_position_m: [0.0, 10.0, 10.0],
            ul_user_position_m: [65.0, 60.0, 1.5],
            dl_user_position_m: [5.0, 80.0, 1.5],
            paths_per_link: 4,
            ref_path_gain_db: -30.0,
            path_loss_exponents: PathLossExponents::default(),
            si_gain_db: -90.0,
            si_residual: 1e-8,
            noise_density_dbm_per_hz: -174.0,
            bandwidth_hz: 1.0,
            power_bs_max_dbm: 37.0,
            power_ul_max_dbm: 20.0,
            rate_min_dl_bps_hz: 1.0,
            rate_min_ul_bps_hz: 1.0,
            solver: SolverControls::default(),
        }
    }

    /// Full-scale profile (the sizes the reference figures use).
    pub fn paper() -> Self {
        Self {
            tx_antennas: 8,
            rx_antennas: 4,
            ris_elements: 64,
            paths_per_link: 6,
            ..Self::desk()
        }
    }

    /// Upper bound on how many elements fit in the region at spacing d0
    /// (square-grid packing).
    pub fn grid_capacity(&self) -> usize {
        let per_side = (self.region_side_m / self.min_separation_m).floor() as usize + 1;
        per_side * per_side
    }

    /// Validates counts, ranges and region capacity.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("wavelength_m", self.wavelength_m),
            ("region_side_m", self.region_side_m),
            ("min_separation_m", self.min_separation_m),
            ("bandwidth_hz", self.bandwidth_hz),
        ];
        for (name, value) in positive {
            if !(value > 0.0) {
                return Err(ConfigError::NonPositive { name, value });
            }
        }
        let counts = [
            ("tx_antennas", self.tx_antennas),
            ("rx_antennas", self.rx_antennas),
            ("ris_elements", self.ris_elements),
            ("paths_per_link", self.paths_per_link),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(ConfigError::ZeroCount { name });
            }
        }
        if !(0.0..=1.0).contains(&self.si_residual) {
            return Err(ConfigError::SiResidualRange(self.si_residual));
        }
        let capacity = self.grid_capacity();
        let largest = self
            .tx_antennas
            .max(self.rx_antennas)
            .max(self.ris_elements);
        if largest > capacity {
            return Err(ConfigError::RegionTooSmall {
                region_side_m: self.region_side_m,
                min_separation_m: self.min_separation_m,
                capacity,
                requested: largest,
            });
        }
        for (name, value) in [
            ("rate_min_dl_bps_hz", self.rate_min_dl_bps_hz),
            ("rate_min_ul_bps_hz", self.rate_min_ul_bps_hz),
        ] {
            if value < 0.0 {
                return Err(ConfigError::NegativeRate { name, value });
            }
        }
        Ok(())
    }

    /// Noise power in watts over the configured bandwidth.
    pub fn noise_power_w(&self) -> f64 {
        let dbm = self.noise_density_dbm_per_hz + 10.0 * self.bandwidth_hz.log10();
        dbm_to_w(dbm)
    }

    /// Base-station power budget in watts.
    pub fn power_bs_max_w(&self) -> f64 {
        dbm_to_w(self.power_bs_max_dbm)
    }

    /// Uplink power budget in watts.
    pub fn power_ul_max_w(&self) -> f64 {
        dbm_to_w(self.power_ul_max_dbm)
    }

    /// Reference gain β0 at 1 m, linear.
    pub fn ref_path_gain(&self) -> f64 {
        db_to_linear(self.ref_path_gain_db)
    }

    /// Minimum downlink SINR implied by the rate requirement.
    pub fn gamma_min_dl(&self) -> f64 {
        rate_to_sinr(self.rate_min_dl_bps_hz)
    }

    /// Minimum uplink SINR implied by the rate requirement.
    pub fn gamma_min_ul(&self) -> f64 {
        rate_to_sinr(self.rate_min_ul_bps_hz)
    }

    /// Straight-line distance between the two endpoints of `link`
    /// (1 m nominal for the loopback and undefined-free for the scalar
    /// inter-user link).
    pub fn link_distance_m(&self, link: LinkId) -> f64 {
        let d = |a: [f64; 3], b: [f64; 3]| {
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        };
        match link {
            LinkId::BsRis | LinkId::RisBs => d(self.bs_position_m, self.ris_position_m),
            LinkId::BsDl => d(self.bs_position_m, self.dl_user_position_m),
            LinkId::UlBs => d(self.bs_position_m, self.ul_user_position_m),
            LinkId::RisDl => d(self.ris_position_m, self.dl_user_position_m),
            LinkId::UlRis => d(self.ris_position_m, self.ul_user_position_m),
            LinkId::SelfInterference => 1.0,
            LinkId::InterUser => d(self.ul_user_position_m, self.dl_user_position_m),
        }
    }

    /// Path-loss exponent of `link` (loopback has none; returns 0).
    pub fn link_exponent(&self, link: LinkId) -> f64 {
        let e = &self.path_loss_exponents;
        match link {
            LinkId::BsRis | LinkId::RisBs => e.bs_ris,
            LinkId::BsDl => e.bs_dl,
            LinkId::UlBs => e.bs_ul,
            LinkId::RisDl => e.ris_dl,
            LinkId::UlRis => e.ris_ul,
            LinkId::InterUser => e.ul_dl,
            LinkId::SelfInterference => 0.0,
        }
    }

    /// Variance of a single path coefficient of `link`: total link gain
    /// divided evenly over the resolvable paths.
    pub fn path_variance(&self, link: LinkId) -> f64 {
        match link {
            LinkId::SelfInterference => {
                db_to_linear(self.si_gain_db) / self.paths_per_link as f64
            }
            LinkId::InterUser => {
                // Scalar link: one unresolved path carries the whole gain.
                self.ref_path_gain() * self.link_distance_m(link).powf(-self.link_exponent(link))
            }
            _ => {
                let d = self.link_distance_m(link);
                self.ref_path_gain() * d.powf(-self.link_exponent(link))
                    / self.paths_per_link as f64
            }
        }
    }
}

/// dBm → watts.
pub fn dbm_to_w(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// dB → linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Rate requirement (bps/Hz) → SINR threshold 2^R − 1.
pub fn rate_to_sinr(rate_bps_hz: f64) -> f64 {
    2f64.powf(rate_bps_hz) - 1.0
}
