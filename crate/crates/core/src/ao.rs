//! Alternating-optimization driver: initialization, the block loop with
//! acceptance guards, convergence bookkeeping and the per-iteration trace.
//!
//! One outer iteration visits the blocks in a fixed order — transmit
//! beamformer, receive combiner, uplink power, surface phases, then the
//! three element-position blocks (transmit, receive, surface). Every block
//! runs inside a revert guard: the true sum rate is re-evaluated after the
//! block and the previous state is restored if the block lost ground. The
//! blocks are individually ascent-safe by construction, so the guard only
//! absorbs last-ulp numerical noise and the deterministic fallbacks a block
//! takes when its own subproblem is infeasible. The traced rate sequence is
//! therefore non-decreasing, and doubles as the convergence signal: the
//! loop stops once a full round gains at most `ao_tol_bps_hz`, or at the
//! iteration cap.
//!
//! A [`VariantMask`] freezes any subset of blocks, which is how the
//! fixed-antenna / fixed-element baselines are produced: a frozen position
//! block leaves its array at the initial grid layout for the whole run.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::derivative::ArrayId;
use crate::channel::{ChannelSet, PositionSet, ScenarioRealization};
use crate::metrics::{self, Feasibility, OptState, StateError};
use crate::scenario::ScenarioConfig;
use crate::subproblems::TrustRadii;
use crate::subproblems::beamforming::update_beamformer;
use crate::subproblems::combiner::update_combiner;
use crate::subproblems::phase::update_phases;
use crate::subproblems::positions::update_positions;
use crate::subproblems::power::update_power;
use crate::{C64, CVec, RVec};

/// The blocks of one outer iteration, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Beamformer,
    Combiner,
    Power,
    Phases,
    TxPositions,
    RxPositions,
    RisPositions,
}

impl Block {
    /// Execution order of one outer iteration.
    pub const ALL: [Block; 7] = [
        Block::Beamformer,
        Block::Combiner,
        Block::Power,
        Block::Phases,
        Block::TxPositions,
        Block::RxPositions,
        Block::RisPositions,
    ];

    /// Stable lowercase name (used for timing columns and logs).
    pub fn name(self) -> &'static str {
        match self {
            Block::Beamformer => "beamformer",
            Block::Combiner => "combiner",
            Block::Power => "power",
            Block::Phases => "phases",
            Block::TxPositions => "tx_positions",
            Block::RxPositions => "rx_positions",
            Block::RisPositions => "ris_positions",
        }
    }

    fn index(self) -> usize {
        match self {
            Block::Beamformer => 0,
            Block::Combiner => 1,
            Block::Power => 2,
            Block::Phases => 3,
            Block::TxPositions => 4,
            Block::RxPositions => 5,
            Block::RisPositions => 6,
        }
    }
}

/// Which blocks a run is allowed to touch. The four movability flags define
/// the named baseline variants; the remaining three exist so degenerate
/// runs (e.g. "power only") can be scripted and tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantMask {
    /// Optimize transmit-antenna positions.
    pub move_tx: bool,
    /// Optimize receive-antenna positions.
    pub move_rx: bool,
    /// Optimize surface-element positions.
    pub move_ris: bool,
    /// Optimize surface phases.
    pub optimize_phases: bool,
    /// Optimize the transmit beamformer.
    pub update_beamformer: bool,
    /// Optimize the receive combiner.
    pub update_combiner: bool,
    /// Optimize the uplink power.
    pub update_power: bool,
}

impl Default for VariantMask {
    fn default() -> Self {
        Self::full()
    }
}

impl VariantMask {
    /// Everything enabled: movable antennas and movable elements.
    pub fn full() -> Self {
        Self {
            move_tx: true,
            move_rx: true,
            move_ris: true,
            optimize_phases: true,
            update_beamformer: true,
            update_combiner: true,
            update_power: true,
        }
    }

    /// Everything disabled; combine with struct update syntax to enable
    /// single blocks.
    pub fn none() -> Self {
        Self {
            move_tx: false,
            move_rx: false,
            move_ris: false,
            optimize_phases: false,
            update_beamformer: false,
            update_combiner: false,
            update_power: false,
        }
    }

    /// Antennas frozen at the grid; surface elements still movable.
    pub fn fixed_antennas() -> Self {
        Self {
            move_tx: false,
            move_rx: false,
            ..Self::full()
        }
    }

    /// Surface elements frozen at the grid; antennas still movable.
    pub fn fixed_elements() -> Self {
        Self {
            move_ris: false,
            ..Self::full()
        }
    }

    /// Both antennas and surface elements frozen: the conventional
    /// fixed-geometry baseline (phases, beamformer, combiner and power are
    /// still optimized).
    pub fn fixed_antennas_fixed_elements() -> Self {
        Self {
            move_tx: false,
            move_rx: false,
            move_ris: false,
            ..Self::full()
        }
    }

    fn allows(self, block: Block) -> bool {
        match block {
            Block::Beamformer => self.update_beamformer,
            Block::Combiner => self.update_combiner,
            Block::Power => self.update_power,
            Block::Phases => self.optimize_phases,
            Block::TxPositions => self.move_tx,
            Block::RxPositions => self.move_rx,
            Block::RisPositions => self.move_ris,
        }
    }
}

/// Deterministic per-iteration record. Row 0 evaluates the initial state;
/// row `n ≥ 1` evaluates the state after outer iteration `n`. Wall-clock
/// timings live in [`AoTrace::block_seconds`], not here, so two runs with
/// the same seed compare equal row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct AoIteration {
    /// Outer iteration number (0 = initial state).
    pub iteration: usize,
    pub sum_rate_bps_hz: f64,
    pub sinr_dl: f64,
    pub sinr_ul: f64,
    /// Constraint verdicts at this iterate.
    pub feasibility: Feasibility,
    /// False when the beamformer relaxation reported the QoS floors
    /// unreachable this iteration (the block is then skipped).
    pub beamformer_qos_ok: bool,
    /// False when no uplink power level could satisfy both QoS floors.
    pub power_feasible: bool,
    /// Rank-one recovery iterations spent by the beamformer block.
    pub srocr_iterations: usize,
    /// Trust radii after the iteration (phase and position blocks).
    pub trust: TrustRadii,
}

/// Full history of one run.
#[derive(Debug, Clone)]
pub struct AoTrace {
    /// Deterministic per-iteration records; `rows[0]` is the initial state.
    pub rows: Vec<AoIteration>,
    /// Wall-clock seconds per block, parallel to `rows` (row 0 is all
    /// zeros). Indexed by [`Block::ALL`] order. Kept out of [`AoIteration`]
    /// so determinism checks and exports stay reproducible.
    pub block_seconds: Vec<[f64; 7]>,
    /// True when the loop stopped on the rate-gain tolerance rather than
    /// the iteration cap.
    pub converged: bool,
}

impl AoTrace {
    /// Sum rate of the last recorded iterate.
    pub fn final_rate(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.sum_rate_bps_hz)
    }

    /// Outer iterations actually executed.
    pub fn iterations_run(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }
}

/// Everything a finished run hands back.
#[derive(Debug, Clone)]
pub struct AoRun {
    pub state: OptState,
    pub trace: AoTrace,
}

/// Mixed into the run seed so the phase initialization stream never
/// coincides with the channel-realization stream (both are seeded ChaCha;
/// `ScenarioRealization::sample` consumes the raw seed).
const INIT_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Feasible starting point: grid positions at the spacing floor, uniform
/// random phases, maximum-ratio beamformer toward the effective downlink
/// channel at full transmit power, matched-filter combiner, full uplink
/// power. Every constraint except possibly the QoS floors holds by
/// construction; QoS repair is the first iteration's job.
pub fn initialize(cfg: &ScenarioConfig, real: &ScenarioRealization, seed: u64) -> OptState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM_SALT);
    let positions = PositionSet::grid_layout(cfg);
    let phases_rad = RVec::from_iterator(
        cfg.ris_elements,
        (0..cfg.ris_elements).map(|_| rng.gen::<f64>() * std::f64::consts::TAU),
    );
    let ch = ChannelSet::build(cfg, real, &positions);
    let mut st = OptState {
        beamformer: CVec::zeros(cfg.tx_antennas),
        combiner: CVec::zeros(cfg.rx_antennas),
        ul_power_w: cfg.power_ul_max_w(),
        phases_rad,
        positions,
    };
    let phases = st.phase_factors();
    let h_eff = metrics::effective_dl_row(&ch, &phases);
    let h_norm = h_eff.norm();
    st.beamformer = if h_norm > 0.0 {
        h_eff.adjoint() * C64::new(cfg.power_bs_max_w().sqrt() / h_norm, 0.0)
    } else {
        // Degenerate draw (zero downlink channel): spread power uniformly.
        CVec::from_element(
            cfg.tx_antennas,
            C64::new((cfg.power_bs_max_w() / cfg.tx_antennas as f64).sqrt(), 0.0),
        )
    };
    let a_ul = metrics::effective_ul_col(&ch, &phases);
    st.combiner = if a_ul.norm() > 0.0 {
        a_ul.normalize()
    } else {
        // Degenerate draw (zero uplink channel): any unit combiner works.
        let mut v = CVec::zeros(cfg.rx_antennas);
        v[0] = C64::new(1.0, 0.0);
        v
    };
    st
}

/// Runs one block inside the revert guard. Returns the rate after the
/// block (equal to `rate_before` when the block was reverted or made no
/// change).
#[allow(clippy::too_many_arguments)]
fn run_block(
    block: Block,
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    ch: &mut ChannelSet,
    st: &mut OptState,
    trust: &mut TrustRadii,
    row: &mut AoIteration,
    rate_before: f64,
    mask: VariantMask,
) -> Result<f64, StateError> {
    let saved_state = st.clone();
    let saved_ch = ch.clone();
    let saved_trust = *trust;
    let retune = mask.update_combiner;
    match block {
        Block::Beamformer => match update_beamformer(cfg, ch, st) {
            Ok(report) => {
                row.beamformer_qos_ok = report.qos_feasible;
                row.srocr_iterations += report.srocr_iterations;
            }
            Err(e) => return Err(e),
        },
        Block::Combiner => {
            update_combiner(cfg, ch, st)?;
        }
        Block::Power => {
            let report = update_power(cfg, ch, st)?;
            row.power_feasible = report.feasible;
        }
        Block::Phases => {
            update_phases(cfg, ch, st, trust, retune)?;
        }
        Block::TxPositions => {
            update_positions(cfg, real, ch, st, ArrayId::Tx, trust, retune, false)?;
        }
        Block::RxPositions => {
            update_positions(cfg, real, ch, st, ArrayId::Rx, trust, retune, false)?;
        }
        Block::RisPositions => {
            // The surface block may rotate phases to keep the leak null
            // closed across layout changes, but only when this variant
            // optimizes phases in the first place.
            update_positions(
                cfg,
                real,
                ch,
                st,
                ArrayId::Ris,
                trust,
                retune,
                mask.optimize_phases,
            )?;
        }
    }
    let rate_after = metrics::sum_rate(cfg, ch, st)?;
    if rate_after < rate_before {
        *st = saved_state;
        *ch = saved_ch;
        *trust = saved_trust;
        return Ok(rate_before);
    }
    Ok(rate_after)
}

/// Runs the full alternating loop from the standard initial point.
///
/// Blocks disabled by `mask` are never executed, so their variables keep
/// their initial values for the whole run. Subproblem-level infeasibility
/// (unreachable QoS floors) is recorded in the trace and the run continues
/// with the affected block skipped; only a structurally invalid state
/// (zero combiner, which the initializer rules out) aborts with an error.
pub fn run(
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    mask: VariantMask,
    seed: u64,
) -> Result<AoRun, StateError> {
    let mut st = initialize(cfg, real, seed);
    let mut ch = ChannelSet::build(cfg, real, &st.positions);
    let mut trust = TrustRadii::initial(cfg);

    let record = |iteration: usize,
                  st: &OptState,
                  ch: &ChannelSet,
                  trust: &TrustRadii|
     -> Result<AoIteration, StateError> {
        Ok(AoIteration {
            iteration,
            sum_rate_bps_hz: metrics::sum_rate(cfg, ch, st)?,
            sinr_dl: metrics::sinr_dl(cfg, ch, st),
            sinr_ul: metrics::sinr_ul(cfg, ch, st)?,
            feasibility: metrics::feasibility(cfg, ch, st),
            beamformer_qos_ok: true,
            power_feasible: true,
            srocr_iterations: 0,
            trust: *trust,
        })
    };

    let mut trace = AoTrace {
        rows: vec![record(0, &st, &ch, &trust)?],
        block_seconds: vec![[0.0; 7]],
        converged: false,
    };

    for iteration in 1..=cfg.solver.ao_max_iterations {
        let rate_at_start = trace.rows.last().expect("trace has row 0").sum_rate_bps_hz;
        let mut row = record(iteration, &st, &ch, &trust)?;
        let mut seconds = [0.0; 7];
        let mut rate = rate_at_start;
        for block in Block::ALL {
            if !mask.allows(block) {
                continue;
            }
            let started = Instant::now();
            rate = run_block(
                block,
                cfg,
                real,
                &mut ch,
                &mut st,
                &mut trust,
                &mut row,
                rate,
                mask,
            )?;
            seconds[block.index()] = started.elapsed().as_secs_f64();
        }
        row.sum_rate_bps_hz = metrics::sum_rate(cfg, &ch, &st)?;
        row.sinr_dl = metrics::sinr_dl(cfg, &ch, &st);
        row.sinr_ul = metrics::sinr_ul(cfg, &ch, &st)?;
        row.feasibility = metrics::feasibility(cfg, &ch, &st);
        row.trust = trust;
        trace.rows.push(row);
        trace.block_seconds.push(seconds);
        if rate - rate_at_start <= cfg.solver.ao_tol_bps_hz {
            trace.converged = true;
            break;
        }
    }

    Ok(AoRun { state: st, trace })
}
