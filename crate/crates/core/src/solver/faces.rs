//! Face classification for the staggered grid: every face is tagged once at
//! solver construction so the step kernels never re-derive boundary geometry.

/// How a face participates in the momentum update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FaceKind {
    /// Wall (grid edge, nodata neighbor, or inlet perimeter): flux pinned to zero.
    Closed,
    /// Both adjacent cells are valid: standard two-sided update.
    Interior,
    /// Open outfall owned by the low-index cell; outward is the +axis direction.
    OutletA,
    /// Open outfall owned by the high-index cell; outward is the -axis direction.
    OutletB,
}

/// Precomputed per-face tags and Manning coefficients.
///
/// `x` faces separate horizontally adjacent cells: face `(r, c)` sits between
/// cells `(r, c-1)` and `(r, c)`, flux positive toward increasing column.
/// `y` faces separate vertically adjacent cells: face `(r, c)` sits between
/// cells `(r-1, c)` and `(r, c)`, flux positive toward increasing row.
#[derive(Debug)]
pub(crate) struct FaceTopo {
    pub kind_x: Vec<FaceKind>,
    pub kind_y: Vec<FaceKind>,
    pub n_x: Vec<f64>,
    pub n_y: Vec<f64>,
}

impl FaceTopo {
    /// Classify every face. An outfall opens where an outlet cell meets the
    /// grid edge or a nodata cell, provided the cell one step further inward
    /// is valid (it supplies the surface gradient); inlet cells never open.
    pub(crate) fn build(
        rows: usize,
        cols: usize,
        valid: &[bool],
        inlet: &[bool],
        outlet: &[bool],
        n_cell: &[f64],
    ) -> Self {
        let cell = |r: usize, c: usize| r * cols + c;
        let opens = |i: usize| outlet[i] && !inlet[i];

        let mut kind_x = vec![FaceKind::Closed; rows * (cols + 1)];
        let mut n_x = vec![0.0; rows * (cols + 1)];
        for r in 0..rows {
            for c in 0..=cols {
                let f = r * (cols + 1) + c;
                let a = (c > 0 && valid[cell(r, c - 1)]).then(|| cell(r, c - 1));
                let b = (c < cols && valid[cell(r, c)]).then(|| cell(r, c));
                let (kind, n) = match (a, b) {
                    (Some(ia), Some(ib)) => {
                        (FaceKind::Interior, 0.5 * (n_cell[ia] + n_cell[ib]))
                    }
                    (Some(ia), None) if opens(ia) && c >= 2 && valid[cell(r, c - 2)] => {
                        (FaceKind::OutletA, n_cell[ia])
                    }
                    (None, Some(ib)) if opens(ib) && c + 1 < cols && valid[cell(r, c + 1)] => {
                        (FaceKind::OutletB, n_cell[ib])
                    }
                    _ => (FaceKind::Closed, 0.0),
                };
                kind_x[f] = kind;
                n_x[f] = n;
            }
        }

        let mut kind_y = vec![FaceKind::Closed; (rows + 1) * cols];
        let mut n_y = vec![0.0; (rows + 1) * cols];
        for r in 0..=rows {
            for c in 0..cols {
                let f = r * cols + c;
                let a = (r > 0 && valid[cell(r - 1, c)]).then(|| cell(r - 1, c));
                let b = (r < rows && valid[cell(r, c)]).then(|| cell(r, c));
                let (kind, n) = match (a, b) {
                    (Some(ia), Some(ib)) => {
                        (FaceKind::Interior, 0.5 * (n_cell[ia] + n_cell[ib]))
                    }
                    (Some(ia), None) if opens(ia) && r >= 2 && valid[cell(r - 2, c)] => {
                        (FaceKind::OutletA, n_cell[ia])
                    }
                    (None, Some(ib)) if opens(ib) && r + 1 < rows && valid[cell(r + 1, c)] => {
                        (FaceKind::OutletB, n_cell[ib])
                    }
                    _ => (FaceKind::Closed, 0.0),
                };
                kind_y[f] = kind;
                n_y[f] = n;
            }
        }

        Self {
            kind_x,
            kind_y,
            n_x,
            n_y,
        }
    }
}
