//! Dense complex kernels: Hermitian Cholesky inversion, LU inversion and the
//! Sherman-Morrison-Woodbury (SMW) swap update of an array Gramian inverse.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::LinalgError;
use crate::model::{active_positions, array_gramian, ChannelRealization, SelectionMask};

pub type CMatrix = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Relative pivot floor for the positive-definiteness test.
pub const PD_PIVOT_TOL: f64 = 1e-14;
/// Relative pivot floor for LU.
pub const LU_PIVOT_TOL: f64 = 1e-13;

/// `(g + g^H) / 2`.
pub fn hermitian_part(g: &CMatrix) -> CMatrix {
    (g + g.adjoint()).scale(0.5)
}

/// Lower-triangular Cholesky factor `L` with `g = L L^H`, row-major.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    l: Vec<Complex64>,
}

impl CholeskyFactor {
    /// Factors a Hermitian matrix, reading only its lower triangle.
    ///
    /// A pivot `d_j` (before the square root) must exceed
    /// `1e-14 * trace(g) / K`; otherwise the matrix is reported as not
    /// positive definite.
    pub fn new(g: &CMatrix) -> Result<Self, LinalgError> {
        let n = g.nrows();
        if g.ncols() != n {
            return Err(LinalgError::Dimension(format!("{}x{} is not square", n, g.ncols())));
        }
        let trace: f64 = (0..n).map(|i| g[(i, i)].re).sum();
        let floor = PD_PIVOT_TOL * trace / n.max(1) as f64;
        if n > 0 && !(trace > 0.0) {
            return Err(LinalgError::NotPositiveDefinite { column: 0, pivot: trace });
        }
        let mut l = vec![ZERO; n * n];
        for j in 0..n {
            let d = g[(j, j)].re - l[j * n..j * n + j].iter().map(|z| z.norm_sqr()).sum::<f64>();
            if !(d > floor) {
                return Err(LinalgError::NotPositiveDefinite { column: j, pivot: d });
            }
            let ljj = d.sqrt();
            l[j * n + j] = Complex64::new(ljj, 0.0);
            for i in j + 1..n {
                let mut s = g[(i, j)];
                {
                    let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                    for p in 0..j {
                        s -= ri[p] * rj[p].conj();
                    }
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.l[i * self.n + j])
    }

    /// `ln det(g) = 2 sum ln L_jj`.
    pub fn ln_det(&self) -> f64 {
        (0..self.n).map(|j| 2.0 * self.l[j * self.n + j].re.ln()).sum()
    }

    /// Solves `L L^H x = rhs` in place by forward then backward substitution.
    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        let n = self.n;
        for j in 0..n {
            let row = &self.l[j * n..j * n + j];
            let mut s = x[j];
            for p in 0..j {
                s -= row[p] * x[p];
            }
            x[j] = s / self.l[j * n + j].re;
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for p in j + 1..n {
                s -= self.l[p * n + j].conj() * x[p];
            }
            x[j] = s / self.l[j * n + j].re;
        }
    }

    /// `g^{-1}` column by column from `L L^H x = e_i`, Hermitian-symmetrized.
    pub fn inverse(&self) -> CMatrix {
        let n = self.n;
        let mut inv = CMatrix::zeros(n, n);
        let mut col = vec![ZERO; n];
        for i in 0..n {
            col.iter_mut().for_each(|c| *c = ZERO);
            col[i] = ONE;
            self.solve_in_place(&mut col);
            for (r, v) in col.iter().enumerate() {
                inv[(r, i)] = *v;
            }
        }
        hermitian_part(&inv)
    }
}

/// Inverts a Hermitian positive-definite matrix via `g = L L^H`.
pub fn invert_hermitian_cholesky(g: &CMatrix) -> Result<CMatrix, LinalgError> {
    Ok(CholeskyFactor::new(g)?.inverse())
}

/// General inverse by LU with partial pivoting. A pivot below
/// `1e-13 * max|a_ij|` is reported as [`LinalgError::SingularUpdate`].
pub fn lu_inverse(a: &CMatrix) -> Result<CMatrix, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension(format!("{}x{} is not square", n, a.ncols())));
    }
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let floor = LU_PIVOT_TOL * scale;
    // row-major working copy augmented with the identity
    let w = 2 * n;
    let mut m = vec![ZERO; n * w];
    for i in 0..n {
        for j in 0..n {
            m[i * w + j] = a[(i, j)];
        }
        m[i * w + n + i] = ONE;
    }
    for c in 0..n {
        let (pr, pv) = (c..n)
            .map(|r| (r, m[r * w + c].norm()))
            .fold((c, -1.0), |best, x| if x.1 > best.1 { x } else { best });
        if !(pv > floor) {
            return Err(LinalgError::SingularUpdate { column: c, pivot: pv });
        }
        if pr != c {
            for j in 0..w {
                m.swap(c * w + j, pr * w + j);
            }
        }
        let inv_p = ONE / m[c * w + c];
        for j in 0..w {
            m[c * w + j] *= inv_p;
        }
        for r in 0..n {
            if r == c {
                continue;
            }
            let f = m[r * w + c];
            if f == ZERO {
                continue;
            }
            for j in 0..w {
                let v = m[c * w + j];
                m[r * w + j] -= f * v;
            }
        }
    }
    Ok(CMatrix::from_fn(n, n, |i, j| m[i * w + n + j]))
}

/// The six intermediate products of the SMW update
/// `(A + U V^H)^{-1} = A^{-1} - A^{-1} U (I + V^H A^{-1} U)^{-1} V^H A^{-1}`.
#[derive(Debug, Clone)]
pub struct SmwTerms {
    /// `V^H A^{-1}`
    pub q1: CMatrix,
    /// `I + Q1 U`
    pub q2: CMatrix,
    /// `Q2^{-1}`
    pub q3: CMatrix,
    /// `U Q3`
    pub q4: CMatrix,
    /// `I - Q4 Q1`
    pub q5: CMatrix,
    /// `A^{-1} Q5`, the updated inverse (before symmetrization)
    pub q6: CMatrix,
}

impl SmwTerms {
    /// Text dump of the intermediates, one labelled matrix per block.
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for (name, q) in [
            ("Q1", &self.q1),
            ("Q2", &self.q2),
            ("Q3", &self.q3),
            ("Q4", &self.q4),
            ("Q5", &self.q5),
            ("Q6", &self.q6),
        ] {
            out.push_str(&format!("{name} {} {}\n", q.nrows(), q.ncols()));
            for i in 0..q.nrows() {
                let row: Vec<String> = (0..q.ncols())
                    .map(|j| format!("{:e} {:e}", q[(i, j)].re, q[(i, j)].im))
                    .collect();
                out.push_str(&row.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

/// Computes the SMW intermediates for swapping the rows `old_rows` out of a
/// Gramian and `new_rows` in, given the current inverse `a_inv`.
///
/// `U = [-old^H  new^H]` and `V^H = [old; new]`, in that order.
pub fn smw_terms(
    a_inv: &CMatrix,
    old_rows: &CMatrix,
    new_rows: &CMatrix,
) -> Result<SmwTerms, LinalgError> {
    let k = a_inv.nrows();
    if old_rows.ncols() != k || new_rows.ncols() != k {
        return Err(LinalgError::Dimension(format!(
            "row blocks must have {k} columns (got {} and {})",
            old_rows.ncols(),
            new_rows.ncols()
        )));
    }
    let (r1, r2) = (old_rows.nrows(), new_rows.nrows());
    let r = r1 + r2;
    let mut v_h = CMatrix::zeros(r, k);
    v_h.rows_mut(0, r1).copy_from(old_rows);
    v_h.rows_mut(r1, r2).copy_from(new_rows);
    let mut u = CMatrix::zeros(k, r);
    u.columns_mut(0, r1).copy_from(&(-old_rows.adjoint()));
    u.columns_mut(r1, r2).copy_from(&new_rows.adjoint());

    let q1 = &v_h * a_inv;
    let q2 = CMatrix::identity(r, r) + &q1 * &u;
    let q3 = lu_inverse(&q2)?;
    let q4 = &u * &q3;
    let q5 = CMatrix::identity(k, k) - &q4 * &q1;
    let q6 = a_inv * &q5;
    Ok(SmwTerms {
        q1,
        q2,
        q3,
        q4,
        q5,
        q6,
    })
}

/// Updated inverse after replacing `old_rows` by `new_rows`, symmetrized.
/// Empty row blocks leave the inverse unchanged.
pub fn smw_swap_update(
    a_inv: &CMatrix,
    old_rows: &CMatrix,
    new_rows: &CMatrix,
) -> Result<CMatrix, LinalgError> {
    if old_rows.nrows() + new_rows.nrows() == 0 {
        return Ok(a_inv.clone());
    }
    Ok(hermitian_part(&smw_terms(a_inv, old_rows, new_rows)?.q6))
}

/// Inverse of the array Gramian for a committed selection, with the
/// per-subarray masks it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianState {
    g_inv: CMatrix,
    mask: SelectionMask,
    iteration: usize,
}

impl GramianState {
    /// Full Cholesky rebuild from a selection.
    pub fn from_mask(ch: &ChannelRealization, mask: SelectionMask) -> Result<Self, LinalgError> {
        let g_inv = invert_hermitian_cholesky(&array_gramian(ch, &mask))?;
        Ok(Self {
            g_inv,
            mask,
            iteration: 0,
        })
    }

    pub fn g_inv(&self) -> &CMatrix {
        &self.g_inv
    }

    pub fn mask(&self) -> &SelectionMask {
        &self.mask
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// SMW inverse for replacing subarray `b`'s committed selection by
    /// `candidate`, using the complete old and new row blocks.
    pub fn smw_swap_update(
        &self,
        ch: &ChannelRealization,
        b: usize,
        candidate: &[bool],
    ) -> Result<CMatrix, LinalgError> {
        let offset = b * self.mask.antennas_per_subarray();
        let old: Vec<usize> = self.mask.subarray_indices(b);
        let new: Vec<usize> = active_positions(candidate).into_iter().map(|i| i + offset).collect();
        smw_swap_update(&self.g_inv, &ch.rows_of(&old), &ch.rows_of(&new))
    }

    /// Same result as [`Self::smw_swap_update`], but only the antennas that
    /// actually change state enter `U` and `V`: rows present in both blocks
    /// cancel in `U V^H`.
    pub fn swap_update_delta(
        &self,
        ch: &ChannelRealization,
        b: usize,
        candidate: &[bool],
    ) -> Result<CMatrix, LinalgError> {
        let current = self.mask.chromosome(b);
        debug_assert_eq!(current.len(), candidate.len());
        let offset = b * self.mask.antennas_per_subarray();
        let mut removed = Vec::new();
        let mut added = Vec::new();
        for (i, (&c, &n)) in current.iter().zip(candidate).enumerate() {
            match (c, n) {
                (true, false) => removed.push(offset + i),
                (false, true) => added.push(offset + i),
                _ => {}
            }
        }
        smw_swap_update(&self.g_inv, &ch.rows_of(&removed), &ch.rows_of(&added))
    }

    /// Replaces subarray `b`'s mask and installs a freshly rebuilt inverse.
    pub fn commit_subarray(&self, b: usize, chromosome: &[bool], fresh_inverse: CMatrix) -> Self {
        let mut mask = self.mask.clone();
        mask.set_chromosome(b, chromosome);
        Self {
            g_inv: fresh_inverse,
            mask,
            iteration: self.iteration + 1,
        }
    }

    /// [`Self::commit_subarray`] with the Cholesky rebuild done here.
    pub fn commit_with_rebuild(
        &self,
        ch: &ChannelRealization,
        b: usize,
        chromosome: &[bool],
    ) -> Result<Self, LinalgError> {
        let mut mask = self.mask.clone();
        mask.set_chromosome(b, chromosome);
        let fresh = invert_hermitian_cholesky(&array_gramian(ch, &mask))?;
        Ok(self.commit_subarray(b, chromosome, fresh))
    }

    /// `||g_inv G_S - I||_F / ||I||_F` against the Gramian rebuilt from the
    /// committed masks.
    pub fn residual(&self, ch: &ChannelRealization) -> f64 {
        let k = self.g_inv.nrows();
        let prod = &self.g_inv * array_gramian(ch, &self.mask);
        (prod - CMatrix::identity(k, k)).norm() / (k as f64).sqrt()
    }
}
