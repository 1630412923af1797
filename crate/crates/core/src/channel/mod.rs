//! Multipath channel synthesis from element positions.
//!
//! Every spatially-resolved link is a sum of L plane-wave paths. A path ℓ
//! seen from an array element at local planar position p = (x, y) contributes
//! the unit-modulus field response
//!
//! ```text
//! e_ℓ(p) = exp(j·(2π/λ)·ρ_ℓ(p)),   ρ_ℓ(p) = x·cosθ_ℓ·sinφ_ℓ + y·sinθ_ℓ,
//! ```
//!
//! with θ_ℓ the path elevation and φ_ℓ the azimuth at that end. Stacking the
//! responses of all elements column-wise gives the field-response matrix E
//! (L × count). A link with resolved ends on both sides assembles as
//! F^H·diag(ζ)·E (receive side conjugated), a transmit-only link as ζᵀ·E and
//! a receive-only link as F^H·ζ, where ζ are the complex path gains drawn as
//! i.i.d. CN(0, β0·d^(−α)/L).
//!
//! The environment (angles + gains) is frozen per realization; element
//! positions enter only through the field responses, which is what makes the
//! position blocks of the optimizer differentiable in closed form (see
//! [`derivative`]).

pub mod derivative;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::{LinkId, ScenarioConfig};
use crate::{C64, CMat, CRow, CVec};

/// Relative slack on the pairwise-spacing check: grid coordinates at exactly
/// d0 spacing round to within a few ulps of d0, and optimizer steps that
/// ride the spacing boundary satisfy it only to the linear-solver residual
/// (~1e-8 absolute), so the check must sit safely below that.
const SEPARATION_SLACK: f64 = 1e-6;

/// Per-path angles at one end of a link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointAngles {
    pub elevation_rad: Vec<f64>,
    pub azimuth_rad: Vec<f64>,
}

impl EndpointAngles {
    fn sample(rng: &mut ChaCha8Rng, paths: usize) -> Self {
        use std::f64::consts::TAU;
        let elevation_rad = (0..paths).map(|_| rng.gen::<f64>() * TAU).collect();
        let azimuth_rad = (0..paths).map(|_| rng.gen::<f64>() * TAU).collect();
        Self {
            elevation_rad,
            azimuth_rad,
        }
    }

    /// Number of paths at this end.
    pub fn paths(&self) -> usize {
        self.elevation_rad.len()
    }

    /// Spatial-frequency factors (κ_x, κ_y) per path: the derivatives of the
    /// phase argument ρ with respect to x and y, divided by 2π/λ.
    pub fn direction_factors(&self) -> (Vec<f64>, Vec<f64>) {
        let kx = self
            .elevation_rad
            .iter()
            .zip(&self.azimuth_rad)
            .map(|(&th, &ph)| th.cos() * ph.sin())
            .collect();
        let ky = self.elevation_rad.iter().map(|&th| th.sin()).collect();
        (kx, ky)
    }
}

/// One link of the frozen environment: complex path gains plus the resolved
/// angle sets at whichever ends carry a movable array.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPaths {
    /// Path gains ζ_ℓ ~ CN(0, β0·d^(−α)/L).
    pub gains: Vec<C64>,
    /// Departure angles (present iff the transmit end is a movable array).
    pub departure: Option<EndpointAngles>,
    /// Arrival angles (present iff the receive end is a movable array).
    pub arrival: Option<EndpointAngles>,
}

impl LinkPaths {
    fn sample(
        rng: &mut ChaCha8Rng,
        paths: usize,
        variance: f64,
        departure: bool,
        arrival: bool,
    ) -> Self {
        let gains = sample_cn(rng, paths, variance);
        let departure = departure.then(|| EndpointAngles::sample(rng, paths));
        let arrival = arrival.then(|| EndpointAngles::sample(rng, paths));
        Self {
            gains,
            departure,
            arrival,
        }
    }
}

/// Circularly-symmetric complex Gaussian draws with the given total variance.
fn sample_cn(rng: &mut ChaCha8Rng, count: usize, variance: f64) -> Vec<C64> {
    let n = Normal::new(0.0, (variance / 2.0).sqrt()).expect("variance must be non-negative");
    (0..count)
        .map(|_| Complex64::new(n.sample(rng), n.sample(rng)))
        .collect()
}

/// A frozen draw of the propagation environment: all path gains and angles,
/// independent of any element position.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRealization {
    /// Transmit array → surface (assembles to H, N×M_t).
    pub bs_ris: LinkPaths,
    /// Surface → receive array (assembles to G, M_r×N).
    pub ris_bs: LinkPaths,
    /// Transmit array → downlink user (row h_d).
    pub bs_dl: LinkPaths,
    /// Uplink user → receive array (column h_u).
    pub ul_bs: LinkPaths,
    /// Surface → downlink user (row h̃).
    pub ris_dl: LinkPaths,
    /// Uplink user → surface (column g).
    pub ul_ris: LinkPaths,
    /// Transmit array → receive array loopback (matrix F).
    pub self_interference: LinkPaths,
    /// Uplink user → downlink user scalar leak.
    pub inter_user: C64,
}

impl ScenarioRealization {
    /// Draws one environment. The draw order is fixed (link by link in field
    /// order; per link: gains, then departure angles, then arrival angles) so
    /// a seed pins the whole realization bit-for-bit.
    pub fn sample(cfg: &ScenarioConfig, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = cfg.paths_per_link;
        let var = |link| cfg.path_variance(link);
        let bs_ris = LinkPaths::sample(&mut rng, l, var(LinkId::BsRis), true, true);
        let ris_bs = LinkPaths::sample(&mut rng, l, var(LinkId::RisBs), true, true);
        let bs_dl = LinkPaths::sample(&mut rng, l, var(LinkId::BsDl), true, false);
        let ul_bs = LinkPaths::sample(&mut rng, l, var(LinkId::UlBs), false, true);
        let ris_dl = LinkPaths::sample(&mut rng, l, var(LinkId::RisDl), true, false);
        let ul_ris = LinkPaths::sample(&mut rng, l, var(LinkId::UlRis), false, true);
        let self_interference =
            LinkPaths::sample(&mut rng, l, var(LinkId::SelfInterference), true, true);
        let inter_user = sample_cn(&mut rng, 1, var(LinkId::InterUser))[0];
        Self {
            bs_ris,
            ris_bs,
            bs_dl,
            ul_bs,
            ris_dl,
            ul_ris,
            self_interference,
            inter_user,
        }
    }
}

/// Local planar element positions of the three movable arrays, in metres,
/// each inside the square [−A/2, A/2]².
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSet {
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
    pub ris: Vec<[f64; 2]>,
}

/// Position-constraint violations.
#[derive(Debug, Error)]
pub enum PositionError {
    #[error("{array} has {got} positions, expected {expected}")]
    WrongCount {
        array: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("{array} element {index} at ({x}, {y}) leaves the region [±{half}]²")]
    OutOfRegion {
        array: &'static str,
        index: usize,
        x: f64,
        y: f64,
        half: f64,
    },
    #[error("{array} elements {a} and {b} are {dist} m apart, below the minimum {min} m")]
    TooClose {
        array: &'static str,
        a: usize,
        b: usize,
        dist: f64,
        min: f64,
    },
}

impl PositionSet {
    /// Compact centered square grid at d0 spacing for each array — the
    /// canonical starting layout. Row-major fill of a ⌈√k⌉-per-side grid.
    pub fn grid_layout(cfg: &ScenarioConfig) -> Self {
        let grid = |count: usize| grid_positions(count, cfg.min_separation_m);
        Self {
            tx: grid(cfg.tx_antennas),
            rx: grid(cfg.rx_antennas),
            ris: grid(cfg.ris_elements),
        }
    }

    /// Whether one array's layout is legal: every element inside the
    /// region and pairwise spacing at the floor, both judged with the same
    /// relative slack [`validate`](Self::validate) uses, so a layout the
    /// optimizer accepts is never reported illegal elsewhere.
    pub fn array_ok(set: &[[f64; 2]], cfg: &ScenarioConfig) -> bool {
        let half = cfg.region_side_m / 2.0;
        let box_slack = half * SEPARATION_SLACK;
        set.iter()
            .all(|&[x, y]| x.abs() <= half + box_slack && y.abs() <= half + box_slack)
            && Self::min_pairwise(set) >= cfg.min_separation_m * (1.0 - SEPARATION_SLACK)
    }

    /// Checks counts, region membership and pairwise spacing within each
    /// array (arrays are at distinct sites, so cross-array spacing is free).
    pub fn validate(&self, cfg: &ScenarioConfig) -> Result<(), PositionError> {
        let half = cfg.region_side_m / 2.0;
        let d0 = cfg.min_separation_m;
        let sets: [(&'static str, &[[f64; 2]], usize); 3] = [
            ("tx", &self.tx, cfg.tx_antennas),
            ("rx", &self.rx, cfg.rx_antennas),
            ("ris", &self.ris, cfg.ris_elements),
        ];
        for (array, set, expected) in sets {
            if set.len() != expected {
                return Err(PositionError::WrongCount {
                    array,
                    got: set.len(),
                    expected,
                });
            }
            let box_slack = half * SEPARATION_SLACK;
            for (i, &[x, y]) in set.iter().enumerate() {
                if x.abs() > half + box_slack || y.abs() > half + box_slack {
                    return Err(PositionError::OutOfRegion {
                        array,
                        index: i,
                        x,
                        y,
                        half,
                    });
                }
            }
            for i in 0..set.len() {
                for j in (i + 1)..set.len() {
                    let dist = planar_distance(set[i], set[j]);
                    if dist < d0 * (1.0 - SEPARATION_SLACK) {
                        return Err(PositionError::TooClose {
                            array,
                            a: i,
                            b: j,
                            dist,
                            min: d0,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Smallest pairwise distance within `set` (∞ for a single element).
    pub fn min_pairwise(set: &[[f64; 2]]) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..set.len() {
            for j in (i + 1)..set.len() {
                min = min.min(planar_distance(set[i], set[j]));
            }
        }
        min
    }
}

pub(crate) fn planar_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn grid_positions(count: usize, spacing: f64) -> Vec<[f64; 2]> {
    let per_side = (count as f64).sqrt().ceil() as usize;
    let offset = (per_side - 1) as f64 / 2.0;
    (0..count)
        .map(|k| {
            let row = k / per_side;
            let col = k % per_side;
            [
                (col as f64 - offset) * spacing,
                (row as f64 - offset) * spacing,
            ]
        })
        .collect()
}

/// Field response of one element at `pos` for every path of `angles`.
pub fn field_response(angles: &EndpointAngles, pos: [f64; 2], wavelength_m: f64) -> CVec {
    let k = std::f64::consts::TAU / wavelength_m;
    let (kx, ky) = angles.direction_factors();
    CVec::from_iterator(
        angles.paths(),
        kx.iter()
            .zip(&ky)
            .map(|(&fx, &fy)| Complex64::from_polar(1.0, k * (pos[0] * fx + pos[1] * fy))),
    )
}

/// Field-response matrix: L × count, one column per element.
pub fn field_response_matrix(
    angles: &EndpointAngles,
    positions: &[[f64; 2]],
    wavelength_m: f64,
) -> CMat {
    let l = angles.paths();
    let mut out = CMat::zeros(l, positions.len());
    for (c, &pos) in positions.iter().enumerate() {
        out.set_column(c, &field_response(angles, pos, wavelength_m));
    }
    out
}

/// rx^H · diag(gains) · tx for a link resolved at both ends.
pub fn assemble_matrix(gains: &[C64], tx: &CMat, rx: &CMat) -> CMat {
    let (l, m_tx) = tx.shape();
    let m_rx = rx.ncols();
    let mut out = CMat::zeros(m_rx, m_tx);
    for r in 0..m_rx {
        for t in 0..m_tx {
            let mut acc = Complex64::ZERO;
            for p in 0..l {
                acc += rx[(p, r)].conj() * gains[p] * tx[(p, t)];
            }
            out[(r, t)] = acc;
        }
    }
    out
}

/// gainsᵀ · tx for a link resolved only at the transmit end.
pub fn assemble_row(gains: &[C64], tx: &CMat) -> CRow {
    CRow::from_iterator(
        tx.ncols(),
        (0..tx.ncols()).map(|t| (0..tx.nrows()).map(|p| gains[p] * tx[(p, t)]).sum()),
    )
}

/// rx^H · gains for a link resolved only at the receive end.
pub fn assemble_column(gains: &[C64], rx: &CMat) -> CVec {
    CVec::from_iterator(
        rx.ncols(),
        (0..rx.ncols()).map(|r| {
            (0..rx.nrows())
                .map(|p| rx[(p, r)].conj() * gains[p])
                .sum()
        }),
    )
}

/// All effective channels of the network for one environment draw and one
/// placement of the movable elements.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// H: transmit array → surface, N × M_t.
    pub bs_ris: CMat,
    /// G: surface → receive array, M_r × N.
    pub ris_bs: CMat,
    /// h_d: transmit array → downlink user, 1 × M_t.
    pub bs_dl: CRow,
    /// h_u: uplink user → receive array, M_r × 1.
    pub ul_bs: CVec,
    /// h̃: surface → downlink user, 1 × N.
    pub ris_dl: CRow,
    /// g: uplink user → surface, N × 1.
    pub ul_ris: CVec,
    /// F: loopback transmit → receive array, M_r × M_t.
    pub self_interference: CMat,
    /// Scalar uplink-user → downlink-user leak.
    pub inter_user: C64,
}

impl ChannelSet {
    /// Assembles every channel from the frozen environment and the current
    /// element positions.
    pub fn build(cfg: &ScenarioConfig, real: &ScenarioRealization, pos: &PositionSet) -> Self {
        let lam = cfg.wavelength_m;
        let frm = |angles: &Option<EndpointAngles>, set: &[[f64; 2]]| {
            field_response_matrix(angles.as_ref().expect("resolved end"), set, lam)
        };

        let h_tx = frm(&real.bs_ris.departure, &pos.tx);
        let h_rx = frm(&real.bs_ris.arrival, &pos.ris);
        let bs_ris = assemble_matrix(&real.bs_ris.gains, &h_tx, &h_rx);

        let g_tx = frm(&real.ris_bs.departure, &pos.ris);
        let g_rx = frm(&real.ris_bs.arrival, &pos.rx);
        let ris_bs = assemble_matrix(&real.ris_bs.gains, &g_tx, &g_rx);

        let bs_dl = assemble_row(&real.bs_dl.gains, &frm(&real.bs_dl.departure, &pos.tx));
        let ul_bs = assemble_column(&real.ul_bs.gains, &frm(&real.ul_bs.arrival, &pos.rx));
        let ris_dl = assemble_row(&real.ris_dl.gains, &frm(&real.ris_dl.departure, &pos.ris));
        let ul_ris = assemble_column(&real.ul_ris.gains, &frm(&real.ul_ris.arrival, &pos.ris));

        let f_tx = frm(&real.self_interference.departure, &pos.tx);
        let f_rx = frm(&real.self_interference.arrival, &pos.rx);
        let self_interference = assemble_matrix(&real.self_interference.gains, &f_tx, &f_rx);

        Self {
            bs_ris,
            ris_bs,
            bs_dl,
            ul_bs,
            ris_dl,
            ul_ris,
            self_interference,
            inter_user: real.inter_user,
        }
    }
}

// ---------------------------------------------------------------------------
// Versioned text serialization of realizations (cross-implementation oracle
// exchange format). Complex numbers are [re, im] pairs; schema_version guards
// future layout changes.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LinkSchema {
    gains: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    departure: Option<EndpointAngles>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    arrival: Option<EndpointAngles>,
}

#[derive(Serialize, Deserialize)]
struct RealizationSchema {
    schema_version: u32,
    bs_ris: LinkSchema,
    ris_bs: LinkSchema,
    bs_dl: LinkSchema,
    ul_bs: LinkSchema,
    ris_dl: LinkSchema,
    ul_ris: LinkSchema,
    self_interference: LinkSchema,
    inter_user: [f64; 2],
}

const SCHEMA_VERSION: u32 = 1;

/// Realization (de)serialization failures.
#[derive(Debug, Error)]
pub enum SerializeError {
    #[error("unsupported realization schema version {0} (this build reads {SCHEMA_VERSION})")]
    Version(u32),
    #[error("malformed realization JSON: {0}")]
    Json(#[from] serde_json::Error),
}

fn link_to_schema(l: &LinkPaths) -> LinkSchema {
    LinkSchema {
        gains: l.gains.iter().map(|c| [c.re, c.im]).collect(),
        departure: l.departure.clone(),
        arrival: l.arrival.clone(),
    }
}

fn link_from_schema(s: LinkSchema) -> LinkPaths {
    LinkPaths {
        gains: s.gains.iter().map(|&[re, im]| C64::new(re, im)).collect(),
        departure: s.departure,
        arrival: s.arrival,
    }
}

impl ScenarioRealization {
    /// Serializes to the versioned JSON exchange format.
    pub fn to_json(&self) -> String {
        let schema = RealizationSchema {
            schema_version: SCHEMA_VERSION,
            bs_ris: link_to_schema(&self.bs_ris),
            ris_bs: link_to_schema(&self.ris_bs),
            bs_dl: link_to_schema(&self.bs_dl),
            ul_bs: link_to_schema(&self.ul_bs),
            ris_dl: link_to_schema(&self.ris_dl),
            ul_ris: link_to_schema(&self.ul_ris),
            self_interference: link_to_schema(&self.self_interference),
            inter_user: [self.inter_user.re, self.inter_user.im],
        };
        serde_json::to_string_pretty(&schema).expect("realization serializes")
    }

    /// Parses the JSON exchange format, rejecting unknown schema versions.
    pub fn from_json(text: &str) -> Result<Self, SerializeError> {
        let schema: RealizationSchema = serde_json::from_str(text)?;
        if schema.schema_version != SCHEMA_VERSION {
            return Err(SerializeError::Version(schema.schema_version));
        }
        Ok(Self {
            bs_ris: link_from_schema(schema.bs_ris),
            ris_bs: link_from_schema(schema.ris_bs),
            bs_dl: link_from_schema(schema.bs_dl),
            ul_bs: link_from_schema(schema.ul_bs),
            ris_dl: link_from_schema(schema.ris_dl),
            ul_ris: link_from_schema(schema.ul_ris),
            self_interference: link_from_schema(schema.self_interference),
            inter_user: C64::new(schema.inter_user[0], schema.inter_user[1]),
        })
    }
}
