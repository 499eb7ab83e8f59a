//! Per-step kernels. Each step runs three passes over row bands: x-face
//! fluxes, y-face fluxes, then depths. Every row of output is written by
//! exactly one band and every input comes from the previous pass, so the
//! result and the audit sums are identical for any band count.

use std::ops::Range;

use rayon::prelude::*;

use super::faces::FaceKind;
use super::{SimulationState, Solver};

/// Row-band partition: `tiles` contiguous, non-empty ranges covering `0..rows`.
pub(crate) fn make_bands(rows: usize, tiles: usize) -> Vec<Range<usize>> {
    let t = tiles.max(1).min(rows);
    let base = rows / t;
    let extra = rows % t;
    let mut bands = Vec::with_capacity(t);
    let mut start = 0;
    for i in 0..t {
        let len = base + usize::from(i < extra);
        bands.push(start..start + len);
        start += len;
    }
    bands
}

/// Split `buf` into per-band mutable windows of `width` items per row.
fn split_rows<'a, T>(
    mut buf: &'a mut [T],
    width: usize,
    bands: &[Range<usize>],
) -> Vec<&'a mut [T]> {
    let mut out = Vec::with_capacity(bands.len());
    for b in bands {
        let (head, tail) = buf.split_at_mut((b.end - b.start) * width);
        out.push(head);
        buf = tail;
    }
    debug_assert!(buf.is_empty());
    out
}

/// Volume totals and the largest depth change produced by one step.
pub(crate) struct StepStats {
    pub max_dh: f64,
    pub inflow: f64,
    pub outflow: f64,
    pub clamped: f64,
    pub bad_cell: Option<(usize, usize)>,
}

/// Semi-implicit momentum update for one face. `d_eta` is the water-surface
/// difference in the face's positive direction.
#[inline]
fn momentum(q: f64, q_orth: f64, n: f64, hf: f64, d_eta: f64, g: f64, dt: f64, dx: f64) -> f64 {
    let qmag = (q * q + q_orth * q_orth).sqrt();
    // h_f^{7/3} written as h_f^2 * cbrt(h_f).
    let h73 = hf * hf * hf.cbrt();
    (q - g * hf * dt * d_eta / dx) / (1.0 + g * dt * n * n * qmag / h73)
}

fn flux_x_band(
    s: &Solver,
    cur: &SimulationState,
    dt: f64,
    band: Range<usize>,
    qx_out: &mut [f64],
    outflow_out: &mut [f64],
) {
    let cols = s.geo.cols;
    let w = cols + 1;
    let (g, dx, h_dry) = (s.params.g, s.geo.cell_size, s.params.h_dry);
    for r in band.clone() {
        let mut row_outflow = 0.0;
        for c in 0..w {
            let f = r * w + c;
            let kind = s.topo.kind_x[f];
            let q_new = match kind {
                FaceKind::Closed => 0.0,
                FaceKind::Interior => {
                    let ia = r * cols + (c - 1);
                    let ib = r * cols + c;
                    let (za, zb) = (s.z[ia], s.z[ib]);
                    let (ea, eb) = (za + cur.h[ia], zb + cur.h[ib]);
                    let hf = ea.max(eb) - za.max(zb);
                    if hf <= h_dry {
                        0.0
                    } else {
                        let qo = 0.25
                            * (cur.qy[r * cols + (c - 1)]
                                + cur.qy[(r + 1) * cols + (c - 1)]
                                + cur.qy[r * cols + c]
                                + cur.qy[(r + 1) * cols + c]);
                        momentum(cur.qx[f], qo, s.topo.n_x[f], hf, eb - ea, g, dt, dx)
                    }
                }
                FaceKind::OutletA => {
                    let io = r * cols + (c - 1);
                    let hf = cur.h[io];
                    if hf <= h_dry {
                        0.0
                    } else {
                        let ii = r * cols + (c - 2);
                        let d_eta = (s.z[io] + cur.h[io]) - (s.z[ii] + cur.h[ii]);
                        let qo = 0.5
                            * (cur.qy[r * cols + (c - 1)] + cur.qy[(r + 1) * cols + (c - 1)]);
                        let q = momentum(cur.qx[f], qo, s.topo.n_x[f], hf, d_eta, g, dt, dx);
                        // Comparison (not `max`) so a NaN is kept, not masked.
                        if q < 0.0 {
                            0.0
                        } else {
                            q
                        }
                    }
                }
                FaceKind::OutletB => {
                    let io = r * cols + c;
                    let hf = cur.h[io];
                    if hf <= h_dry {
                        0.0
                    } else {
                        let ii = r * cols + (c + 1);
                        let d_eta = -((s.z[io] + cur.h[io]) - (s.z[ii] + cur.h[ii]));
                        let qo =
                            0.5 * (cur.qy[r * cols + c] + cur.qy[(r + 1) * cols + c]);
                        let q = momentum(cur.qx[f], qo, s.topo.n_x[f], hf, d_eta, g, dt, dx);
                        if q > 0.0 {
                            0.0
                        } else {
                            q
                        }
                    }
                }
            };
            qx_out[(r - band.start) * w + c] = q_new;
            match kind {
                FaceKind::OutletA => row_outflow += q_new * dt * dx,
                FaceKind::OutletB => row_outflow += -q_new * dt * dx,
                _ => {}
            }
        }
        outflow_out[r - band.start] = row_outflow;
    }
}

fn flux_y_band(
    s: &Solver,
    cur: &SimulationState,
    dt: f64,
    band: Range<usize>,
    qy_out: &mut [f64],
    outflow_out: &mut [f64],
) {
    let cols = s.geo.cols;
    let w = cols + 1;
    let (g, dx, h_dry) = (s.params.g, s.geo.cell_size, s.params.h_dry);
    for r in band.clone() {
        let mut row_outflow = 0.0;
        for c in 0..cols {
            let f = r * cols + c;
            let kind = s.topo.kind_y[f];
            let q_new = match kind {
                FaceKind::Closed => 0.0,
                FaceKind::Interior => {
                    let ia = (r - 1) * cols + c;
                    let ib = r * cols + c;
                    let (za, zb) = (s.z[ia], s.z[ib]);
                    let (ea, eb) = (za + cur.h[ia], zb + cur.h[ib]);
                    let hf = ea.max(eb) - za.max(zb);
                    if hf <= h_dry {
                        0.0
                    } else {
                        let qo = 0.25
                            * (cur.qx[(r - 1) * w + c]
                                + cur.qx[(r - 1) * w + c + 1]
                                + cur.qx[r * w + c]
                                + cur.qx[r * w + c + 1]);
                        momentum(cur.qy[f], qo, s.topo.n_y[f], hf, eb - ea, g, dt, dx)
                    }
                }
                FaceKind::OutletA => {
                    let io = (r - 1) * cols + c;
                    let hf = cur.h[io];
                    if hf <= h_dry {
                        0.0
                    } else {
                        let ii = (r - 2) * cols + c;
                        let d_eta = (s.z[io] + cur.h[io]) - (s.z[ii] + cur.h[ii]);
                        let qo = 0.5 * (cur.qx[(r - 1) * w + c] + cur.qx[(r - 1) * w + c + 1]);
                        let q = momentum(cur.qy[f], qo, s.topo.n_y[f], hf, d_eta, g, dt, dx);
                        if q < 0.0 {
                            0.0
                        } else {
                            q
                        }
                    }
                }
                FaceKind::OutletB => {
                    let io = r * cols + c;
                    let hf = cur.h[io];
                    if hf <= h_dry {
                        0.0
                    } else {
                        let ii = (r + 1) * cols + c;
                        let d_eta = -((s.z[io] + cur.h[io]) - (s.z[ii] + cur.h[ii]));
                        let qo = 0.5 * (cur.qx[r * w + c] + cur.qx[r * w + c + 1]);
                        let q = momentum(cur.qy[f], qo, s.topo.n_y[f], hf, d_eta, g, dt, dx);
                        if q > 0.0 {
                            0.0
                        } else {
                            q
                        }
                    }
                }
            };
            qy_out[(r - band.start) * cols + c] = q_new;
            match kind {
                FaceKind::OutletA => row_outflow += q_new * dt * dx,
                FaceKind::OutletB => row_outflow += -q_new * dt * dx,
                _ => {}
            }
        }
        outflow_out[r - band.start] = row_outflow;
    }
}

struct DepthBand<'a> {
    rows: Range<usize>,
    h_out: &'a mut [f64],
    inflow: &'a mut [f64],
    clamped: &'a mut [f64],
    dh: &'a mut [f64],
    ok: &'a mut [bool],
}

fn depth_band(s: &Solver, cur: &SimulationState, qx: &[f64], qy: &[f64], dt: f64, b: DepthBand) {
    let cols = s.geo.cols;
    let w = cols + 1;
    let dx = s.geo.cell_size;
    let area = dx * dx;
    for r in b.rows.clone() {
        let (mut row_inflow, mut row_clamped, mut row_dh, mut row_ok) = (0.0, 0.0, 0.0, true);
        for c in 0..cols {
            let i = r * cols + c;
            let out = (r - b.rows.start) * cols + c;
            if !s.valid[i] {
                b.h_out[out] = 0.0;
                continue;
            }
            let div = qx[r * w + c + 1] - qx[r * w + c] + qy[(r + 1) * cols + c] - qy[r * cols + c];
            if !div.is_finite() {
                row_ok = false;
            }
            let mut hn = cur.h[i] - dt * div / dx;
            if hn < 0.0 {
                row_clamped += -hn * area;
                hn = 0.0;
            }
            let target = s.inlet_target[i];
            if !target.is_nan() {
                row_inflow += (target - hn) * area;
                hn = target;
            }
            if !hn.is_finite() {
                row_ok = false;
            }
            let d = (hn - cur.h[i]).abs();
            if d > row_dh {
                row_dh = d;
            }
            b.h_out[out] = hn;
        }
        let rr = r - b.rows.start;
        b.inflow[rr] = row_inflow;
        b.clamped[rr] = row_clamped;
        b.dh[rr] = row_dh;
        b.ok[rr] = row_ok;
    }
}

/// First cell (row-major) with a non-finite depth or flux divergence.
fn locate_bad_cell(s: &Solver, next: &SimulationState) -> (usize, usize) {
    let (rows, cols) = (s.geo.rows, s.geo.cols);
    let w = cols + 1;
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if !s.valid[i] {
                continue;
            }
            let div = next.qx[r * w + c + 1] - next.qx[r * w + c] + next.qy[(r + 1) * cols + c]
                - next.qy[r * cols + c];
            if !next.h[i].is_finite() || !div.is_finite() {
                return (r, c);
            }
        }
    }
    (0, 0)
}

/// Advance `cur` into `next` by `dt`. `next`'s buffers are fully rewritten.
pub(crate) fn advance(
    s: &Solver,
    cur: &SimulationState,
    next: &mut SimulationState,
    dt: f64,
) -> StepStats {
    let rows = s.geo.rows;
    let cols = s.geo.cols;
    let mut outflow_x = vec![0.0; rows];
    let mut outflow_y = vec![0.0; rows + 1];
    let mut inflow = vec![0.0; rows];
    let mut clamped = vec![0.0; rows];
    let mut dh = vec![0.0; rows];
    let mut ok = vec![true; rows];

    {
        let qx_bands = split_rows(&mut next.qx, cols + 1, &s.bands);
        let of_bands = split_rows(&mut outflow_x, 1, &s.bands);
        s.bands
            .par_iter()
            .zip(qx_bands)
            .zip(of_bands)
            .for_each(|((band, qx_out), of_out)| {
                flux_x_band(s, cur, dt, band.clone(), qx_out, of_out);
            });
    }
    {
        let qy_bands = split_rows(&mut next.qy, cols, &s.y_bands);
        let of_bands = split_rows(&mut outflow_y, 1, &s.y_bands);
        s.y_bands
            .par_iter()
            .zip(qy_bands)
            .zip(of_bands)
            .for_each(|((band, qy_out), of_out)| {
                flux_y_band(s, cur, dt, band.clone(), qy_out, of_out);
            });
    }
    {
        let qx = &next.qx;
        let qy = &next.qy;
        let h_bands = split_rows(&mut next.h, cols, &s.bands);
        let inflow_bands = split_rows(&mut inflow, 1, &s.bands);
        let clamped_bands = split_rows(&mut clamped, 1, &s.bands);
        let dh_bands = split_rows(&mut dh, 1, &s.bands);
        let ok_bands = split_rows(&mut ok, 1, &s.bands);
        let work: Vec<DepthBand> = s
            .bands
            .iter()
            .zip(h_bands)
            .zip(inflow_bands)
            .zip(clamped_bands)
            .zip(dh_bands)
            .zip(ok_bands)
            .map(|(((((band, h_out), inflow), clamped), dh), ok)| DepthBand {
                rows: band.clone(),
                h_out,
                inflow,
                clamped,
                dh,
                ok,
            })
            .collect();
        work.into_par_iter()
            .for_each(|b| depth_band(s, cur, qx, qy, dt, b));
    }

    // Fold the per-row partials in a fixed global order so the totals do not
    // depend on the band partition.
    let mut stats = StepStats {
        max_dh: 0.0,
        inflow: 0.0,
        outflow: 0.0,
        clamped: 0.0,
        bad_cell: None,
    };
    for r in 0..rows {
        stats.outflow += outflow_x[r];
    }
    for r in 0..=rows {
        stats.outflow += outflow_y[r];
    }
    for r in 0..rows {
        stats.inflow += inflow[r];
        stats.clamped += clamped[r];
        if dh[r] > stats.max_dh {
            stats.max_dh = dh[r];
        }
    }
    if ok.iter().any(|v| !v) {
        stats.bad_cell = Some(locate_bad_cell(s, next));
    }
    stats
}
