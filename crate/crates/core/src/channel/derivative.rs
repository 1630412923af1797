//! Exact per-coordinate derivatives of the assembled channels.
//!
//! Moving one element only changes its own field responses, so the
//! derivative of any channel with respect to a single planar coordinate is a
//! rank-one touch: one column (transmit-side move), one row (receive-side
//! move) or one entry (single-ended link). The field-response derivative is
//!
//! ```text
//! ∂e_ℓ/∂x = j·(2π/λ)·cosθ_ℓ·sinφ_ℓ·e_ℓ,    ∂e_ℓ/∂y = j·(2π/λ)·sinθ_ℓ·e_ℓ,
//! ```
//!
//! and receive-side factors pick up the conjugate through the F^H in the
//! assembly. [`d_channel_set`] returns a full [`ChannelSet`]-shaped structure
//! holding ∂(channel)/∂(coordinate) entrywise, zero everywhere the coordinate
//! does not appear.

use num_complex::Complex64;

use super::{field_response, ChannelSet, EndpointAngles, PositionSet, ScenarioRealization};
use crate::scenario::ScenarioConfig;
use crate::{C64, CMat, CRow, CVec};

/// Which movable array a coordinate belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayId {
    /// Transmit antennas at the base station.
    Tx,
    /// Receive antennas at the base station.
    Rx,
    /// Surface elements.
    Ris,
}

/// Planar axis of a coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// One scalar position coordinate: element `index` of `array`, along `axis`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coordinate {
    pub array: ArrayId,
    pub index: usize,
    pub axis: Axis,
}

impl Coordinate {
    /// All coordinates of one array in canonical order (element-major,
    /// x before y) — the variable ordering the position optimizer uses.
    pub fn array_coords(array: ArrayId, count: usize) -> Vec<Coordinate> {
        (0..count)
            .flat_map(|index| {
                [Axis::X, Axis::Y].map(|axis| Coordinate { array, index, axis })
            })
            .collect()
    }
}

/// Derivative of the field-response vector of a single element with respect
/// to one of its planar coordinates.
fn d_field_response(
    angles: &EndpointAngles,
    pos: [f64; 2],
    axis: Axis,
    wavelength_m: f64,
) -> CVec {
    let e = field_response(angles, pos, wavelength_m);
    let k = std::f64::consts::TAU / wavelength_m;
    let (kx, ky) = angles.direction_factors();
    let factors = match axis {
        Axis::X => kx,
        Axis::Y => ky,
    };
    CVec::from_iterator(
        angles.paths(),
        e.iter()
            .zip(factors)
            .map(|(&v, f)| Complex64::new(0.0, k * f) * v),
    )
}

/// ∂(every channel)/∂(one position coordinate), same shapes as
/// [`ChannelSet`]. The scalar inter-user leak never depends on positions, so
/// its slot is zero.
pub fn d_channel_set(
    cfg: &ScenarioConfig,
    real: &ScenarioRealization,
    pos: &PositionSet,
    coord: Coordinate,
) -> ChannelSet {
    let lam = cfg.wavelength_m;
    let (m_t, m_r, n) = (cfg.tx_antennas, cfg.rx_antennas, cfg.ris_elements);
    let mut out = ChannelSet {
        bs_ris: CMat::zeros(n, m_t),
        ris_bs: CMat::zeros(m_r, n),
        bs_dl: CRow::zeros(m_t),
        ul_bs: CVec::zeros(m_r),
        ris_dl: CRow::zeros(n),
        ul_ris: CVec::zeros(n),
        self_interference: CMat::zeros(m_r, m_t),
        inter_user: Complex64::ZERO,
    };
    let i = coord.index;

    // Derivative of the moved element's own response, per link end.
    let d_at = |angles: &Option<EndpointAngles>, p: [f64; 2]| {
        d_field_response(angles.as_ref().expect("resolved end"), p, coord.axis, lam)
    };
    // Plain response of a fixed element, per link end.
    let e_at = |angles: &Option<EndpointAngles>, p: [f64; 2]| {
        field_response(angles.as_ref().expect("resolved end"), p, lam)
    };

    match coord.array {
        ArrayId::Tx => {
            let p = pos.tx[i];
            // H: transmit side → column i.
            let de = d_at(&real.bs_ris.departure, p);
            for r in 0..n {
                let er = e_at(&real.bs_ris.arrival, pos.ris[r]);
                out.bs_ris[(r, i)] = path_sum(&real.bs_ris.gains, &de, Some(&er));
            }
            // h_d: entry i.
            let de = d_at(&real.bs_dl.departure, p);
            out.bs_dl[i] = path_sum(&real.bs_dl.gains, &de, None);
            // F: transmit side → column i.
            let de = d_at(&real.self_interference.departure, p);
            for r in 0..m_r {
                let er = e_at(&real.self_interference.arrival, pos.rx[r]);
                out.self_interference[(r, i)] =
                    path_sum(&real.self_interference.gains, &de, Some(&er));
            }
        }
        ArrayId::Rx => {
            let p = pos.rx[i];
            // G: receive side → row i (conjugated derivative).
            let dr = d_at(&real.ris_bs.arrival, p);
            for t in 0..n {
                let et = e_at(&real.ris_bs.departure, pos.ris[t]);
                out.ris_bs[(i, t)] = path_sum_rx(&real.ris_bs.gains, &et, &dr);
            }
            // h_u: entry i.
            let dr = d_at(&real.ul_bs.arrival, p);
            out.ul_bs[i] = path_sum_rx_only(&real.ul_bs.gains, &dr);
            // F: receive side → row i.
            let dr = d_at(&real.self_interference.arrival, p);
            for t in 0..m_t {
                let et = e_at(&real.self_interference.departure, pos.tx[t]);
                out.self_interference[(i, t)] =
                    path_sum_rx(&real.self_interference.gains, &et, &dr);
            }
        }
        ArrayId::Ris => {
            let p = pos.ris[i];
            // H: receive side → row i.
            let dr = d_at(&real.bs_ris.arrival, p);
            for t in 0..m_t {
                let et = e_at(&real.bs_ris.departure, pos.tx[t]);
                out.bs_ris[(i, t)] = path_sum_rx(&real.bs_ris.gains, &et, &dr);
            }
            // G: transmit side → column i.
            let de = d_at(&real.ris_bs.departure, p);
            for r in 0..m_r {
                let er = e_at(&real.ris_bs.arrival, pos.rx[r]);
                out.ris_bs[(r, i)] = path_sum(&real.ris_bs.gains, &de, Some(&er));
            }
            // h̃: entry i (transmit side).
            let de = d_at(&real.ris_dl.departure, p);
            out.ris_dl[i] = path_sum(&real.ris_dl.gains, &de, None);
            // g: entry i (receive side).
            let dr = d_at(&real.ul_ris.arrival, p);
            out.ul_ris[i] = path_sum_rx_only(&real.ul_ris.gains, &dr);
        }
    }
    out
}

/// Σ_ℓ conj(rx_ℓ)·ζ_ℓ·d(tx_ℓ), with the receive factor optional.
fn path_sum(gains: &[C64], d_tx: &CVec, rx: Option<&CVec>) -> C64 {
    let mut acc = Complex64::ZERO;
    for p in 0..gains.len() {
        let r = rx.map_or(Complex64::ONE, |v| v[p].conj());
        acc += r * gains[p] * d_tx[p];
    }
    acc
}

/// Σ_ℓ conj(d(rx_ℓ))·ζ_ℓ·tx_ℓ (receive-side move).
fn path_sum_rx(gains: &[C64], tx: &CVec, d_rx: &CVec) -> C64 {
    let mut acc = Complex64::ZERO;
    for p in 0..gains.len() {
        acc += d_rx[p].conj() * gains[p] * tx[p];
    }
    acc
}

/// Σ_ℓ conj(d(rx_ℓ))·ζ_ℓ (receive-only link).
fn path_sum_rx_only(gains: &[C64], d_rx: &CVec) -> C64 {
    let mut acc = Complex64::ZERO;
    for p in 0..gains.len() {
        acc += d_rx[p].conj() * gains[p];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::PositionSet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite difference of every channel entry with respect to one
    /// coordinate.
    fn fd_channel_set(
        cfg: &ScenarioConfig,
        real: &ScenarioRealization,
        pos: &PositionSet,
        coord: Coordinate,
        h: f64,
    ) -> ChannelSet {
        let mut plus = pos.clone();
        let mut minus = pos.clone();
        let bump = |set: &mut Vec<[f64; 2]>, delta: f64| match coord.axis {
            Axis::X => set[coord.index][0] += delta,
            Axis::Y => set[coord.index][1] += delta,
        };
        match coord.array {
            ArrayId::Tx => {
                bump(&mut plus.tx, h);
                bump(&mut minus.tx, -h);
            }
            ArrayId::Rx => {
                bump(&mut plus.rx, h);
                bump(&mut minus.rx, -h);
            }
            ArrayId::Ris => {
                bump(&mut plus.ris, h);
                bump(&mut minus.ris, -h);
            }
        }
        let cp = ChannelSet::build(cfg, real, &plus);
        let cm = ChannelSet::build(cfg, real, &minus);
        let half = Complex64::new(0.5 / h, 0.0);
        ChannelSet {
            bs_ris: (&cp.bs_ris - &cm.bs_ris) * half,
            ris_bs: (&cp.ris_bs - &cm.ris_bs) * half,
            bs_dl: (&cp.bs_dl - &cm.bs_dl) * half,
            ul_bs: (&cp.ul_bs - &cm.ul_bs) * half,
            ris_dl: (&cp.ris_dl - &cm.ris_dl) * half,
            ul_ris: (&cp.ul_ris - &cm.ul_ris) * half,
            self_interference: (&cp.self_interference - &cm.self_interference) * half,
            inter_user: Complex64::ZERO,
        }
    }

    fn max_abs_diff(a: &ChannelSet, b: &ChannelSet) -> f64 {
        let m = |x: f64, y: f64| x.max(y);
        let d_mat = |p: &CMat, q: &CMat| {
            p.iter()
                .zip(q.iter())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, m)
        };
        let mut worst = d_mat(&a.bs_ris, &b.bs_ris);
        worst = m(worst, d_mat(&a.ris_bs, &b.ris_bs));
        worst = m(worst, d_mat(&a.self_interference, &b.self_interference));
        worst = m(
            worst,
            a.bs_dl
                .iter()
                .zip(b.bs_dl.iter())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, m),
        );
        worst = m(
            worst,
            a.ris_dl
                .iter()
                .zip(b.ris_dl.iter())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, m),
        );
        worst = m(
            worst,
            a.ul_bs
                .iter()
                .zip(b.ul_bs.iter())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, m),
        );
        worst = m(
            worst,
            a.ul_ris
                .iter()
                .zip(b.ul_ris.iter())
                .map(|(u, v)| (u - v).norm())
                .fold(0.0, m),
        );
        worst
    }

    /// Scale of the channel entries touched by an array, used to make the
    /// FD comparison relative (link gains differ by orders of magnitude).
    fn touched_scale(ch: &ChannelSet, array: ArrayId) -> f64 {
        let m = |acc: f64, v: &C64| acc.max(v.norm());
        match array {
            ArrayId::Tx => {
                let a = ch.bs_ris.iter().fold(0.0, m);
                let b = ch.bs_dl.iter().fold(0.0, m);
                let c = ch.self_interference.iter().fold(0.0, m);
                a.max(b).max(c)
            }
            ArrayId::Rx => {
                let a = ch.ris_bs.iter().fold(0.0, m);
                let b = ch.ul_bs.iter().fold(0.0, m);
                let c = ch.self_interference.iter().fold(0.0, m);
                a.max(b).max(c)
            }
            ArrayId::Ris => {
                let a = ch.bs_ris.iter().fold(0.0, m);
                let b = ch.ris_bs.iter().fold(0.0, m);
                let c = ch.ris_dl.iter().fold(0.0, m);
                let d = ch.ul_ris.iter().fold(0.0, m);
                a.max(b).max(c).max(d)
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences_for_all_arrays() {
        let cfg = ScenarioConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..20 {
            let real = ScenarioRealization::sample(&cfg, 300 + trial);
            let mut pos = PositionSet::grid_layout(&cfg);
            for set in [&mut pos.tx, &mut pos.rx, &mut pos.ris] {
                for p in set.iter_mut() {
                    p[0] += (rng.gen::<f64>() - 0.5) * 0.004;
                    p[1] += (rng.gen::<f64>() - 0.5) * 0.004;
                }
            }
            let ch = ChannelSet::build(&cfg, &real, &pos);
            let picks = [
                Coordinate {
                    array: ArrayId::Tx,
                    index: rng.gen_range(0..cfg.tx_antennas),
                    axis: Axis::X,
                },
                Coordinate {
                    array: ArrayId::Rx,
                    index: rng.gen_range(0..cfg.rx_antennas),
                    axis: Axis::Y,
                },
                Coordinate {
                    array: ArrayId::Ris,
                    index: rng.gen_range(0..cfg.ris_elements),
                    axis: if rng.gen::<bool>() { Axis::X } else { Axis::Y },
                },
            ];
            for coord in picks {
                let analytic = d_channel_set(&cfg, &real, &pos, coord);
                let fd = fd_channel_set(&cfg, &real, &pos, coord, 1e-6);
                let err = max_abs_diff(&analytic, &fd);
                // d(entry)/dx scales like (2π/λ)·|entry|; normalize by that.
                let scale = touched_scale(&ch, coord.array)
                    * (std::f64::consts::TAU / cfg.wavelength_m);
                assert!(
                    err < 1e-7 * scale.max(1e-300),
                    "trial {trial}: |analytic − fd| = {err:e}, scale {scale:e}"
                );
            }
        }
    }

    #[test]
    fn derivative_is_zero_outside_touched_slice() {
        let cfg = ScenarioConfig::desk();
        let real = ScenarioRealization::sample(&cfg, 77);
        let pos = PositionSet::grid_layout(&cfg);
        let d = d_channel_set(
            &cfg,
            &real,
            &pos,
            Coordinate {
                array: ArrayId::Ris,
                index: 3,
                axis: Axis::X,
            },
        );
        // Only row 3 of H, column 3 of G and entries 3 of h̃/g may be
        // nonzero; h_d, h_u, F and the scalar leak are untouched.
        assert!(d.bs_dl.iter().all(|v| v.norm() == 0.0));
        assert!(d.ul_bs.iter().all(|v| v.norm() == 0.0));
        assert!(d.self_interference.iter().all(|v| v.norm() == 0.0));
        assert_eq!(d.inter_user, Complex64::ZERO);
        for r in 0..cfg.ris_elements {
            if r != 3 {
                assert!(d.bs_ris.row(r).iter().all(|v| v.norm() == 0.0));
                assert!(d.ris_bs.column(r).iter().all(|v| v.norm() == 0.0));
                assert_eq!(d.ris_dl[r].norm(), 0.0);
                assert_eq!(d.ul_ris[r].norm(), 0.0);
            }
        }
        assert!(d.bs_ris.row(3).iter().any(|v| v.norm() > 0.0));
    }

    #[test]
    fn array_coords_order_is_element_major() {
        let coords = Coordinate::array_coords(ArrayId::Tx, 2);
        assert_eq!(coords.len(), 4);
        assert_eq!(coords[0].index, 0);
        assert_eq!(coords[0].axis, Axis::X);
        assert_eq!(coords[1].index, 0);
        assert_eq!(coords[1].axis, Axis::Y);
        assert_eq!(coords[2].index, 1);
        assert_eq!(coords[2].axis, Axis::X);
    }
}
