//! Cell geometry, channel realizations, antenna selection masks and Gramians.

use std::io::{self, BufRead, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::linalg::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Positions of the ULA elements (on `y = 0`) and of the users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub antenna_positions: Vec<Point>,
    pub user_positions: Vec<Point>,
}

/// Places the array along one side of the cell and drops the users.
///
/// Antenna `m` (0-based) sits at `x = (m + 1/2) L / M`. Users are uniform over
/// `x in [0, L]`, `y in (0.1 L, L)`.
pub fn make_geometry<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> Geometry {
    let l = cfg.cell_size_m;
    let m = cfg.num_antennas as f64;
    let antenna_positions = (0..cfg.num_antennas)
        .map(|i| Point {
            x: (i as f64 + 0.5) * l / m,
            y: 0.0,
        })
        .collect();
    let user_positions = (0..cfg.num_users)
        .map(|_| {
            let x = rng.random_range(0.0..=l);
            let y = loop {
                let y = rng.random_range(0.1 * l..l);
                if y > 0.1 * l {
                    break y;
                }
            };
            Point { x, y }
        })
        .collect();
    Geometry {
        antenna_positions,
        user_positions,
    }
}

/// Large-scale attenuation `q0 * d^-kappa`.
pub fn path_loss(cfg: &SystemConfig, distance_m: f64) -> f64 {
    cfg.ref_path_loss * distance_m.powf(-cfg.path_loss_exp)
}

/// One channel draw `H` (M x K) with everything derived from it that the
/// selectors need. Immutable once built.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    h: CMatrix,
    /// Row-major copy of `H` for cheap per-antenna row access.
    rows: Vec<Complex64>,
    beta: Option<DMatrix<f64>>,
    row_norms_sq: Vec<f64>,
    per_antenna_gramian: Vec<CMatrix>,
}

/// Draws `h_k = R_k^{1/2} h'_k` with unit-variance circularly symmetric
/// Gaussian small-scale fading.
pub fn make_channel<R: Rng + ?Sized>(
    cfg: &SystemConfig,
    geo: &Geometry,
    rng: &mut R,
) -> ChannelRealization {
    let m = geo.antenna_positions.len();
    let k = geo.user_positions.len();
    let beta = DMatrix::from_fn(m, k, |i, j| {
        path_loss(cfg, geo.antenna_positions[i].distance(&geo.user_positions[j]))
    });
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = CMatrix::zeros(m, k);
    // users outer, antennas inner: column-major fill order
    for j in 0..k {
        for i in 0..m {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            h[(i, j)] = Complex64::new(re, im) * (scale * beta[(i, j)].sqrt());
        }
    }
    let mut ch = ChannelRealization::from_matrix(h);
    ch.beta = Some(beta);
    ch
}

impl ChannelRealization {
    /// Wraps an externally produced channel matrix; path-loss coefficients are
    /// unknown in that case.
    pub fn from_matrix(h: CMatrix) -> Self {
        let (m, k) = h.shape();
        let mut rows = Vec::with_capacity(m * k);
        for i in 0..m {
            rows.extend((0..k).map(|j| h[(i, j)]));
        }
        let row_norms_sq = (0..m)
            .map(|i| rows[i * k..(i + 1) * k].iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let per_antenna_gramian = (0..m)
            .map(|i| {
                let row = &rows[i * k..(i + 1) * k];
                CMatrix::from_fn(k, k, |a, b| row[a].conj() * row[b])
            })
            .collect();
        Self {
            h,
            rows,
            beta: None,
            row_norms_sq,
            per_antenna_gramian,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.h.ncols()
    }

    pub fn h_matrix(&self) -> &CMatrix {
        &self.h
    }

    pub fn beta(&self) -> Option<&DMatrix<f64>> {
        self.beta.as_ref()
    }

    /// Channel row `h_m` (1 x K) of antenna `m`.
    pub fn row(&self, m: usize) -> &[Complex64] {
        let k = self.num_users();
        &self.rows[m * k..(m + 1) * k]
    }

    pub fn row_norms_sq(&self) -> &[f64] {
        &self.row_norms_sq
    }

    /// `G_m = h_m^H h_m`.
    pub fn antenna_gramian(&self, m: usize) -> &CMatrix {
        &self.per_antenna_gramian[m]
    }

    /// Stacks the rows of `indices` into a `|indices| x K` matrix.
    pub fn rows_of(&self, indices: &[usize]) -> CMatrix {
        let k = self.num_users();
        CMatrix::from_fn(indices.len(), k, |r, c| self.row(indices[r])[c])
    }

    /// Writes `M K` on the first line, then one line per antenna with
    /// interleaved real/imaginary parts, row-major.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (m, k) = self.h.shape();
        writeln!(w, "{m} {k}")?;
        for i in 0..m {
            let line: Vec<String> = self
                .row(i)
                .iter()
                .flat_map(|z| [format!("{:e}", z.re), format!("{:e}", z.im)])
                .collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> io::Result<Self> {
        let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
        let mut tokens = Vec::new();
        for line in r.lines() {
            tokens.extend(line?.split_whitespace().map(str::to_owned));
        }
        let mut it = tokens.into_iter();
        let m: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing M"))?;
        let k: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad("missing K"))?;
        let vals: Vec<f64> = it
            .map(|t| t.parse::<f64>().map_err(|_| bad("malformed entry")))
            .collect::<io::Result<_>>()?;
        if vals.len() != 2 * m * k {
            return Err(bad("entry count does not match header"));
        }
        Ok(Self::from_matrix(CMatrix::from_fn(m, k, |i, j| {
            let o = 2 * (i * k + j);
            Complex64::new(vals[o], vals[o + 1])
        })))
    }

    /// Binary dump: `M` and `K` as little-endian u64, then row-major
    /// interleaved real/imaginary little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        let (m, k) = self.h.shape();
        w.write_all(&(m as u64).to_le_bytes())?;
        w.write_all(&(k as u64).to_le_bytes())?;
        for z in &self.rows {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> io::Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let m = u64::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let k = u64::from_le_bytes(word) as usize;
        let mut vals = vec![0f64; 2 * m * k];
        for v in vals.iter_mut() {
            r.read_exact(&mut word)?;
            *v = f64::from_le_bytes(word);
        }
        Ok(Self::from_matrix(CMatrix::from_fn(m, k, |i, j| {
            let o = 2 * (i * k + j);
            Complex64::new(vals[o], vals[o + 1])
        })))
    }
}

/// Antenna activation vector (the diagonal of `D`), viewed per subarray.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionMask {
    active: Vec<bool>,
    antennas_per_subarray: usize,
}

impl SelectionMask {
    pub fn empty(cfg: &SystemConfig) -> Self {
        Self::from_bits(vec![false; cfg.num_antennas], cfg.antennas_per_subarray())
    }

    /// All antennas active, ignoring the RF budget.
    pub fn full(cfg: &SystemConfig) -> Self {
        Self::from_bits(vec![true; cfg.num_antennas], cfg.antennas_per_subarray())
    }

    pub fn from_bits(active: Vec<bool>, antennas_per_subarray: usize) -> Self {
        assert!(antennas_per_subarray > 0 && active.len() % antennas_per_subarray == 0);
        Self {
            active,
            antennas_per_subarray,
        }
    }

    /// Builds a mask from 0-based global antenna indices.
    pub fn from_indices(cfg: &SystemConfig, indices: &[usize]) -> Self {
        let mut mask = Self::empty(cfg);
        for &i in indices {
            mask.active[i] = true;
        }
        mask
    }

    pub fn bits(&self) -> &[bool] {
        &self.active
    }

    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn antennas_per_subarray(&self) -> usize {
        self.antennas_per_subarray
    }

    pub fn num_subarrays(&self) -> usize {
        self.active.len() / self.antennas_per_subarray
    }

    pub fn is_active(&self, m: usize) -> bool {
        self.active[m]
    }

    pub fn set(&mut self, m: usize, on: bool) {
        self.active[m] = on;
    }

    /// The per-subarray view `d_b`.
    pub fn chromosome(&self, b: usize) -> &[bool] {
        let mb = self.antennas_per_subarray;
        &self.active[b * mb..(b + 1) * mb]
    }

    pub fn set_chromosome(&mut self, b: usize, genes: &[bool]) {
        let mb = self.antennas_per_subarray;
        self.active[b * mb..(b + 1) * mb].copy_from_slice(genes);
    }

    pub fn count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn subarray_count(&self, b: usize) -> usize {
        self.chromosome(b).iter().filter(|&&a| a).count()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        active_positions(&self.active)
    }

    /// Global indices of the active antennas of subarray `b`.
    pub fn subarray_indices(&self, b: usize) -> Vec<usize> {
        let offset = b * self.antennas_per_subarray;
        active_positions(self.chromosome(b))
            .into_iter()
            .map(|i| i + offset)
            .collect()
    }

    /// Per-subarray RF budget check.
    pub fn is_feasible(&self, rf_per_subarray: usize) -> bool {
        (0..self.num_subarrays()).all(|b| self.subarray_count(b) <= rf_per_subarray)
    }

    /// Mask as a 0/1 string, subarrays separated by `|`.
    pub fn to_bit_string(&self) -> String {
        self.active
            .chunks(self.antennas_per_subarray)
            .map(|c| c.iter().map(|&a| if a { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    }
}

pub(crate) fn active_positions(genes: &[bool]) -> Vec<usize> {
    genes
        .iter()
        .enumerate()
        .filter_map(|(i, &a)| a.then_some(i))
        .collect()
}

/// `G_{S_b} = sum_{m in M_b} D_m G_m`.
pub fn subarray_gramian(ch: &ChannelRealization, mask: &SelectionMask, b: usize) -> CMatrix {
    let k = ch.num_users();
    let mut g = CMatrix::zeros(k, k);
    for m in mask.subarray_indices(b) {
        g += ch.antenna_gramian(m);
    }
    g
}

/// `G_S = sum_b G_{S_b}`.
pub fn array_gramian(ch: &ChannelRealization, mask: &SelectionMask) -> CMatrix {
    let k = ch.num_users();
    (0..mask.num_subarrays()).fold(CMatrix::zeros(k, k), |acc, b| {
        acc + subarray_gramian(ch, mask, b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn small_cfg(m: usize, b: usize, n: usize, k: usize) -> SystemConfig {
        SystemConfig {
            num_antennas: m,
            num_subarrays: b,
            num_rf: n,
            num_users: k,
            ..SystemConfig::full_scale()
        }
    }

    fn rel_frob(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn antenna_positions_are_midpoints() {
        let cfg = small_cfg(2, 1, 1, 1);
        let geo = make_geometry(&cfg, &mut rng_from(0));
        let xs: Vec<f64> = geo.antenna_positions.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![7.5, 22.5]);
    }

    #[test]
    fn users_fall_inside_the_band() {
        let cfg = small_cfg(8, 2, 4, 500);
        let geo = make_geometry(&cfg, &mut rng_from(3));
        for u in &geo.user_positions {
            assert!(u.y > 3.0 && u.y < 30.0, "{u:?}");
            assert!((0.0..=30.0).contains(&u.x));
        }
        assert!(geo.antenna_positions.windows(2).all(|w| w[0].x < w[1].x));
    }

    #[test]
    fn geometry_is_deterministic() {
        let cfg = SystemConfig::desk_scale();
        assert_eq!(
            make_geometry(&cfg, &mut rng_from(11)),
            make_geometry(&cfg, &mut rng_from(11))
        );
    }

    #[test]
    fn path_loss_values() {
        let cfg = SystemConfig::full_scale();
        assert_eq!(path_loss(&cfg, 1.0), cfg.ref_path_loss);
        let b = path_loss(&cfg, 10.0);
        assert!((b - 2.951_209e-7).abs() / 2.951_209e-7 < 1e-6, "{b}");
        assert!(path_loss(&cfg, 10.5) < b);
    }

    #[test]
    fn fading_has_unit_variance() {
        // many co-located antennas, one user: |h|^2 / beta ~ Exp(1)
        let n = 100_000;
        let cfg = small_cfg(n, 1, 1, 1);
        let geo = Geometry {
            antenna_positions: vec![Point { x: 0.0, y: 0.0 }; n],
            user_positions: vec![Point { x: 3.0, y: 4.0 }],
        };
        let ch = make_channel(&cfg, &geo, &mut rng_from(5));
        let beta = ch.beta().unwrap();
        let mean = (0..n)
            .map(|i| ch.h_matrix()[(i, 0)].norm_sqr() / beta[(i, 0)])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn antenna_gramians_are_consistent() {
        let cfg = small_cfg(16, 4, 8, 5);
        let mut rng = rng_from(9);
        let geo = make_geometry(&cfg, &mut rng);
        let ch = make_channel(&cfg, &geo, &mut rng);
        let mut sum = CMatrix::zeros(5, 5);
        for m in 0..16 {
            let g = ch.antenna_gramian(m);
            assert!(rel_frob(&g.adjoint(), g) == 0.0);
            let tr = g.trace().re;
            assert!((tr - ch.row_norms_sq()[m]).abs() <= 1e-12 * tr);
            sum += g;
        }
        let hh = ch.h_matrix().adjoint() * ch.h_matrix();
        assert!(rel_frob(&sum, &hh) < 1e-10);
    }

    #[test]
    fn gramians_match_direct_products() {
        let cfg = small_cfg(8, 2, 4, 3);
        let mut rng = rng_from(21);
        let geo = make_geometry(&cfg, &mut rng);
        let ch = make_channel(&cfg, &geo, &mut rng);
        for trial in 0..20 {
            let bits: Vec<bool> = (0..8).map(|_| rng.random_bool(0.5)).collect();
            let mask = SelectionMask::from_bits(bits, 4);
            let hs = ch.rows_of(&mask.active_indices());
            let direct = hs.adjoint() * &hs;
            let g = array_gramian(&ch, &mask);
            if mask.count() == 0 {
                assert_eq!(g.norm(), 0.0);
                continue;
            }
            assert!(rel_frob(&g, &direct) < 1e-12, "trial {trial}");
            let parts = subarray_gramian(&ch, &mask, 0) + subarray_gramian(&ch, &mask, 1);
            assert!(rel_frob(&parts, &g) < 1e-12);
            let hb = ch.rows_of(&mask.subarray_indices(1));
            assert!(rel_frob(&subarray_gramian(&ch, &mask, 1), &(hb.adjoint() * &hb)) < 1e-12
                || mask.subarray_count(1) == 0);
        }
    }

    #[test]
    fn special_masks() {
        let cfg = small_cfg(6, 1, 6, 3);
        let mut rng = rng_from(2);
        let geo = make_geometry(&cfg, &mut rng);
        let ch = make_channel(&cfg, &geo, &mut rng);
        assert_eq!(subarray_gramian(&ch, &SelectionMask::empty(&cfg), 0).norm(), 0.0);
        let full = array_gramian(&ch, &SelectionMask::full(&cfg));
        let hh = ch.h_matrix().adjoint() * ch.h_matrix();
        assert!(rel_frob(&full, &hh) < 1e-12);

        // orthogonal rows give a diagonal Gramian of squared norms
        let h = CMatrix::from_fn(3, 3, |i, j| {
            if i == j {
                Complex64::new(i as f64 + 1.0, 0.5)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let ch = ChannelRealization::from_matrix(h);
        let cfg = small_cfg(3, 1, 3, 3);
        let g = array_gramian(&ch, &SelectionMask::full(&cfg));
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { ch.row_norms_sq()[i] } else { 0.0 };
                assert_eq!(g[(i, j)], Complex64::new(expect, 0.0));
            }
        }
    }

    #[test]
    fn dumps_round_trip() {
        let cfg = small_cfg(8, 2, 4, 3);
        let mut rng = rng_from(4);
        let geo = make_geometry(&cfg, &mut rng);
        let ch = make_channel(&cfg, &geo, &mut rng);

        let mut text = Vec::new();
        ch.write_text(&mut text).unwrap();
        let back = ChannelRealization::read_text(&text[..]).unwrap();
        assert_eq!(back.h_matrix(), ch.h_matrix());

        let mut bin = Vec::new();
        ch.write_binary(&mut bin).unwrap();
        assert_eq!(bin.len(), 16 + 8 * 2 * 8 * 3);
        let back = ChannelRealization::read_binary(&bin[..]).unwrap();
        assert_eq!(back.h_matrix(), ch.h_matrix());

        assert!(ChannelRealization::read_text(&b"2 2\n1 2 3"[..]).is_err());
    }

    #[test]
    fn mask_views() {
        let cfg = small_cfg(8, 2, 4, 2);
        let mask = SelectionMask::from_indices(&cfg, &[1, 3, 4, 7]);
        assert_eq!(mask.chromosome(0), &[false, true, false, true]);
        assert_eq!(mask.subarray_indices(1), vec![4, 7]);
        assert!(mask.is_feasible(2));
        assert!(!mask.is_feasible(1));
        assert_eq!(mask.to_bit_string(), "0101|1001");
    }
}
