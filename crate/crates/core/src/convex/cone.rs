//! Dense primal-dual interior-point method for
//!
//! ```text
//! minimize cᵀx  subject to  Gx + s = h,  Ax = b,  s ∈ K
//! ```
//!
//! where `K` is a product of a nonnegative orthant, second-order cones and
//! positive semidefinite cones (stored as `svec`, lower triangle column by
//! column, off-diagonals scaled by √2). The iteration runs on the homogeneous
//! self-dual embedding with Nesterov-Todd scaling and a Mehrotra
//! predictor-corrector step, starting from `x = y = 0`, `s = z = e`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Cone layout of the slack vector: orthant first, then second-order cone
/// blocks, then PSD blocks (given by matrix order).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConeSpec {
    pub nonneg: usize,
    pub soc: Vec<usize>,
    pub psd: Vec<usize>,
}

impl ConeSpec {
    pub fn dim(&self) -> usize {
        self.nonneg + self.soc.iter().sum::<usize>() + self.psd.iter().map(|n| n * (n + 1) / 2).sum::<usize>()
    }

    /// Barrier degree: orthant entries, one per SOC block, order per PSD block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc.len() + self.psd.iter().sum::<usize>()
    }

    fn blocks(&self) -> Vec<(BlockKind, usize, usize)> {
        let mut out = Vec::new();
        let mut off = 0;
        if self.nonneg > 0 {
            out.push((BlockKind::Nonneg, off, self.nonneg));
            off += self.nonneg;
        }
        for &q in &self.soc {
            out.push((BlockKind::Soc, off, q));
            off += q;
        }
        for &n in &self.psd {
            out.push((BlockKind::Psd(n), off, n * (n + 1) / 2));
            off += n * (n + 1) / 2;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockKind {
    Nonneg,
    Soc,
    Psd(usize),
}

/// A conic problem in standard form.
#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub c: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub cones: ConeSpec,
}

impl ConicProblem {
    fn check(&self) -> Result<()> {
        let n = self.c.len();
        let m = self.cones.dim();
        if self.g.nrows() != m || self.g.ncols() != n || self.h.len() != m {
            return Err(Error::Dimension(format!(
                "G is {}x{}, h has {}, cone dim {m}, n = {n}",
                self.g.nrows(),
                self.g.ncols(),
                self.h.len()
            )));
        }
        if self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(Error::Dimension(format!("A is {}x{}, b has {}", self.a.nrows(), self.a.ncols(), self.b.len())));
        }
        if self.cones.soc.iter().any(|&q| q == 0) || self.cones.psd.iter().any(|&n| n == 0) {
            return Err(Error::Dimension("empty cone block".into()));
        }
        Ok(())
    }

    /// Plain-text coefficient dump for cross-checking with other solvers.
    pub fn dump(&self) -> String {
        fn row(out: &mut String, it: impl Iterator<Item = f64>) {
            let parts: Vec<String> = it.map(|x| format!("{x:.17e}")).collect();
            out.push_str(&parts.join(" "));
            out.push('\n');
        }
        let mut out = String::new();
        let _ = writeln!(out, "# minimize c'x s.t. Gx + s = h, Ax = b, s in K");
        let _ = writeln!(out, "# svec: lower triangle by columns, off-diagonals times sqrt(2)");
        let _ = writeln!(out, "n {} m {} p {}", self.c.len(), self.h.len(), self.b.len());
        let _ = writeln!(out, "nonneg {}", self.cones.nonneg);
        let _ = writeln!(out, "soc {:?}", self.cones.soc);
        let _ = writeln!(out, "psd {:?}", self.cones.psd);
        out.push_str("c\n");
        row(&mut out, self.c.iter().copied());
        out.push_str("G\n");
        for r in 0..self.g.nrows() {
            row(&mut out, self.g.row(r).iter().copied());
        }
        out.push_str("h\n");
        row(&mut out, self.h.iter().copied());
        out.push_str("A\n");
        for r in 0..self.a.nrows() {
            row(&mut out, self.a.row(r).iter().copied());
        }
        out.push_str("b\n");
        row(&mut out, self.b.iter().copied());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub feastol: f64,
    pub abstol: f64,
    pub reltol: f64,
    pub max_iter: usize,
    /// Looser thresholds accepted when the iteration stalls.
    pub accept_feastol: f64,
    pub accept_gap: f64,
}

impl IpmSettings {
    fn acceptable(&self, pres: f64, dres: f64, gap: f64, relgap: f64, pcost: f64) -> bool {
        let gap_ok = gap <= self.accept_gap || relgap <= self.accept_gap || gap <= self.accept_gap * (1.0 + pcost.abs());
        pres <= self.accept_feastol && dres <= self.accept_feastol && gap_ok
    }
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            feastol: 1e-10,
            abstol: 1e-11,
            reltol: 1e-11,
            max_iter: 100,
            accept_feastol: 1e-7,
            accept_gap: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub s: DVector<f64>,
    pub iterations: usize,
    pub pcost: f64,
    pub dcost: f64,
    /// `sᵀz` at the returned point.
    pub gap: f64,
    pub pres: f64,
    pub dres: f64,
}

// ---------------------------------------------------------------------------
// svec helpers

/// Offset of the diagonal entry `(j, j)` in an `svec` of order `n`.
fn diag_offset(n: usize, j: usize) -> usize {
    j * n - j * j.saturating_sub(1) / 2
}

/// Position of entry `(i, j)` (either triangle) in an `svec` of order `n`.
pub fn svec_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    diag_offset(n, j) + (i - j)
}

/// Symmetric matrix to `svec` form.
pub fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    let r2 = std::f64::consts::SQRT_2;
    for j in 0..n {
        for i in j..n {
            if i == j {
                out.push(m[(i, j)]);
            } else {
                out.push(r2 * 0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
    }
    DVector::from_vec(out)
}

/// `svec` slice of order `n` back to a symmetric matrix.
pub fn smat(v: &[f64], n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    let r2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for j in 0..n {
        for i in j..n {
            if i == j {
                m[(i, j)] = v[k];
            } else {
                m[(i, j)] = v[k] / r2;
                m[(j, i)] = v[k] / r2;
            }
            k += 1;
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Jordan algebra on the product cone

fn identity(cones: &ConeSpec) -> DVector<f64> {
    let mut e = DVector::zeros(cones.dim());
    for (kind, off, len) in cones.blocks() {
        match kind {
            BlockKind::Nonneg => e.rows_mut(off, len).fill(1.0),
            BlockKind::Soc => e[off] = 1.0,
            BlockKind::Psd(n) => {
                for j in 0..n {
                    e[off + diag_offset(n, j)] = 1.0;
                }
            }
        }
    }
    e
}

fn jordan_prod(cones: &ConeSpec, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    for (kind, off, len) in cones.blocks() {
        let xs = x.rows(off, len);
        let ys = y.rows(off, len);
        match kind {
            BlockKind::Nonneg => {
                for i in 0..len {
                    out[off + i] = xs[i] * ys[i];
                }
            }
            BlockKind::Soc => {
                out[off] = xs.dot(&ys);
                for i in 1..len {
                    out[off + i] = xs[0] * ys[i] + ys[0] * xs[i];
                }
            }
            BlockKind::Psd(n) => {
                let xm = smat(xs.as_slice(), n);
                let ym = smat(ys.as_slice(), n);
                let p = (&xm * &ym + &ym * &xm) * 0.5;
                out.rows_mut(off, len).copy_from(&svec(&p));
            }
        }
    }
    out
}

/// Solves `λ ∘ u = r` for `u`, where `λ` is the scaled point (diagonal in
/// the PSD blocks).
fn jordan_div(cones: &ConeSpec, lambda: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(r.len());
    for (kind, off, len) in cones.blocks() {
        let l = lambda.rows(off, len);
        let rr = r.rows(off, len);
        match kind {
            BlockKind::Nonneg => {
                for i in 0..len {
                    out[off + i] = rr[i] / l[i];
                }
            }
            BlockKind::Soc => {
                let lbar = l.rows(1, len - 1);
                let rbar = rr.rows(1, len - 1);
                let det = l[0] * l[0] - lbar.norm_squared();
                let u0 = (l[0] * rr[0] - lbar.dot(&rbar)) / det;
                out[off] = u0;
                for i in 1..len {
                    out[off + i] = (rr[i] - u0 * l[i]) / l[0];
                }
            }
            BlockKind::Psd(n) => {
                let diag: Vec<f64> = (0..n).map(|j| l[diag_offset(n, j)]).collect();
                let mut k = 0;
                for j in 0..n {
                    for i in j..n {
                        out[off + k] = 2.0 * rr[k] / (diag[i] + diag[j]);
                        k += 1;
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling

enum ScaleBlock {
    Nonneg { d: Vec<f64> },
    /// `W = β (2vvᵀ − J)`, `W⁻¹ = (2Jv vᵀJ − J) / β`.
    Soc { beta: f64, v: DVector<f64> },
    /// `W(X) = RᵀXR`.
    Psd { n: usize, r: DMatrix<f64>, rinv: DMatrix<f64> },
}

struct Scaling {
    blocks: Vec<(usize, usize, ScaleBlock)>,
    lambda: DVector<f64>,
}

#[derive(Clone, Copy)]
enum Op {
    W,
    Wt,
    Winv,
    WinvT,
}

fn soc_j(x: &DVector<f64>) -> DVector<f64> {
    let mut y = -x.clone();
    y[0] = x[0];
    y
}

fn soc_jdot(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    x[0] * y[0] - x.rows(1, x.len() - 1).dot(&y.rows(1, y.len() - 1))
}

impl Scaling {
    fn new(cones: &ConeSpec, s: &DVector<f64>, z: &DVector<f64>) -> Result<Scaling> {
        let mut blocks = Vec::new();
        let mut lambda = DVector::zeros(s.len());
        for (kind, off, len) in cones.blocks() {
            let sb = s.rows(off, len).into_owned();
            let zb = z.rows(off, len).into_owned();
            match kind {
                BlockKind::Nonneg => {
                    let d: Vec<f64> = (0..len).map(|i| (sb[i] / zb[i]).sqrt()).collect();
                    for i in 0..len {
                        lambda[off + i] = (sb[i] * zb[i]).sqrt();
                    }
                    blocks.push((off, len, ScaleBlock::Nonneg { d }));
                }
                BlockKind::Soc => {
                    let sn = soc_jdot(&sb, &sb);
                    let zn = soc_jdot(&zb, &zb);
                    if !(sn > 0.0 && zn > 0.0) {
                        return Err(Error::Numerical("iterate left the second-order cone".into()));
                    }
                    let sbar = sb.unscale(sn.sqrt());
                    let zbar = zb.unscale(zn.sqrt());
                    let gamma = ((1.0 + sbar.dot(&zbar)) / 2.0).sqrt();
                    let wbar = (&sbar + soc_j(&zbar)).unscale(2.0 * gamma);
                    let mut v = wbar.clone();
                    v[0] += 1.0;
                    let v = v.unscale((2.0 * (wbar[0] + 1.0)).sqrt());
                    let beta = (sn / zn).powf(0.25);
                    let blk = ScaleBlock::Soc { beta, v };
                    let l = apply_block(&blk, Op::W, &zb);
                    lambda.rows_mut(off, len).copy_from(&l);
                    blocks.push((off, len, blk));
                }
                BlockKind::Psd(n) => {
                    let sm = smat(sb.as_slice(), n);
                    let zm = smat(zb.as_slice(), n);
                    let ls = sm
                        .cholesky()
                        .ok_or_else(|| Error::Numerical("primal iterate left the PSD cone".into()))?
                        .l();
                    let lz = zm
                        .cholesky()
                        .ok_or_else(|| Error::Numerical("dual iterate left the PSD cone".into()))?
                        .l();
                    let svd = (lz.transpose() * &ls).svd(true, true);
                    let vt = svd.v_t.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
                    let u = svd.u.ok_or_else(|| Error::Numerical("SVD failed".into()))?;
                    let sig = svd.singular_values;
                    if sig.iter().any(|&x| x <= 0.0) {
                        return Err(Error::Numerical("singular PSD scaling".into()));
                    }
                    // R = L_s V Λ^{-1/2}, R⁻¹ = Λ^{-1/2} Uᵀ L_zᵀ
                    let mut r = &ls * vt.transpose();
                    let mut rinv = u.transpose() * lz.transpose();
                    for k in 0..n {
                        let f = 1.0 / sig[k].sqrt();
                        r.column_mut(k).scale_mut(f);
                        rinv.row_mut(k).scale_mut(f);
                    }
                    for k in 0..n {
                        lambda[off + diag_offset(n, k)] = sig[k];
                    }
                    blocks.push((off, len, ScaleBlock::Psd { n, r, rinv }));
                }
            }
        }
        Ok(Scaling { blocks, lambda })
    }

    fn apply(&self, op: Op, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(x.len());
        for (off, len, blk) in &self.blocks {
            let xb = x.rows(*off, *len).into_owned();
            out.rows_mut(*off, *len).copy_from(&apply_block(blk, op, &xb));
        }
        out
    }

    fn apply_cols(&self, op: Op, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for j in 0..m.ncols() {
            let col = m.column(j).into_owned();
            out.set_column(j, &self.apply(op, &col));
        }
        out
    }
}

fn apply_block(blk: &ScaleBlock, op: Op, x: &DVector<f64>) -> DVector<f64> {
    match blk {
        ScaleBlock::Nonneg { d } => {
            let inv = matches!(op, Op::Winv | Op::WinvT);
            DVector::from_iterator(x.len(), x.iter().zip(d).map(|(xi, di)| if inv { xi / di } else { xi * di }))
        }
        ScaleBlock::Soc { beta, v } => match op {
            Op::W | Op::Wt => (v * (2.0 * v.dot(x)) - soc_j(x)) * *beta,
            Op::Winv | Op::WinvT => {
                let jv = soc_j(v);
                (&jv * (2.0 * jv.dot(x)) - soc_j(x)) / *beta
            }
        },
        ScaleBlock::Psd { n, r, rinv } => {
            let xm = smat(x.as_slice(), *n);
            let y = match op {
                Op::W => r.transpose() * xm * r,
                Op::Wt => r * xm * r.transpose(),
                Op::Winv => rinv.transpose() * xm * rinv,
                Op::WinvT => rinv * xm * rinv.transpose(),
            };
            svec(&y)
        }
    }
}

// ---------------------------------------------------------------------------
// step length

fn max_step(cones: &ConeSpec, x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let mut alpha = f64::INFINITY;
    for (kind, off, len) in cones.blocks() {
        let xb = x.rows(off, len);
        let db = dx.rows(off, len);
        match kind {
            BlockKind::Nonneg => {
                for i in 0..len {
                    if db[i] < 0.0 {
                        alpha = alpha.min(-xb[i] / db[i]);
                    }
                }
            }
            BlockKind::Soc => {
                // (x0 + a d0)² − ‖x̄ + a d̄‖² = qa a² + 2 qb a + qc
                let xo = xb.into_owned();
                let dd = db.into_owned();
                let qa = soc_jdot(&dd, &dd);
                let qb = soc_jdot(&xo, &dd);
                let qc = soc_jdot(&xo, &xo).max(0.0);
                alpha = alpha.min(smallest_positive_root(qa, qb, qc));
                if dd[0] < 0.0 {
                    alpha = alpha.min(-xo[0] / dd[0]);
                }
            }
            BlockKind::Psd(n) => {
                let xm = smat(xb.as_slice(), n);
                let dm = smat(db.as_slice(), n);
                let a = match xm.cholesky() {
                    Some(ch) => {
                        let l = ch.l();
                        let linv = l.try_inverse().unwrap_or_else(|| DMatrix::zeros(n, n));
                        let t = &linv * dm * linv.transpose();
                        let t = (&t + t.transpose()) * 0.5;
                        let lmin = t.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
                        if lmin < 0.0 {
                            -1.0 / lmin
                        } else {
                            f64::INFINITY
                        }
                    }
                    None => 0.0,
                };
                alpha = alpha.min(a);
            }
        }
    }
    alpha
}

/// Smallest positive root of `a t² + 2 b t + c` with `c ≥ 0`.
fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if a.abs() < 1e-300 {
        return if b < 0.0 { -c / (2.0 * b) } else { f64::INFINITY };
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let sq = disc.sqrt();
    let q = -(b + b.signum() * sq);
    let mut best = f64::INFINITY;
    for t in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
        if t > 0.0 && t < best {
            best = t;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Newton system

struct KktFactor {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    gbar: DMatrix<f64>,
    n: usize,
}

impl KktFactor {
    fn new(p: &ConicProblem, w: &Scaling) -> KktFactor {
        let n = p.c.len();
        let np = p.b.len();
        let gbar = w.apply_cols(Op::WinvT, &p.g);
        let h = gbar.transpose() * &gbar;
        let mut k = DMatrix::zeros(n + np, n + np);
        k.view_mut((0, 0), (n, n)).copy_from(&h);
        k.view_mut((0, n), (n, np)).copy_from(&p.a.transpose());
        k.view_mut((n, 0), (np, n)).copy_from(&p.a);
        let scale = h.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let reg = 1e-13 * scale;
        for i in 0..n {
            k[(i, i)] += reg;
        }
        for i in n..n + np {
            k[(i, i)] -= reg;
        }
        KktFactor { lu: k.lu(), gbar, n }
    }

    /// One reduced solve, returning `(x, y, W z)`.
    fn reduced(&self, w: &Scaling, bx: &DVector<f64>, by: &DVector<f64>, bz: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let n = self.n;
        let bzbar = w.apply(Op::WinvT, bz);
        let mut rhs = DVector::zeros(n + by.len());
        rhs.rows_mut(0, n).copy_from(&(bx + self.gbar.transpose() * &bzbar));
        rhs.rows_mut(n, by.len()).copy_from(by);
        let sol = self.lu.solve(&rhs).ok_or_else(|| Error::Numerical("singular Newton system".into()))?;
        let dx = sol.rows(0, n).into_owned();
        let dy = sol.rows(n, by.len()).into_owned();
        let wdz = &self.gbar * &dx - bzbar;
        Ok((dx, dy, wdz))
    }

    /// Solves the full system `[[0,Aᵀ,Gᵀ],[A,0,0],[G,0,−WᵀW]] (x,y,z) = (bx,by,bz)`
    /// and returns `(x, y, W z)`. The reduced solve is refined against the
    /// residual of the unreduced system, which stays accurate when the
    /// scaling is badly conditioned.
    fn solve(&self, p: &ConicProblem, w: &Scaling, bx: &DVector<f64>, by: &DVector<f64>, bz: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let (mut dx, mut dy, mut wdz) = self.reduced(w, bx, by, bz)?;
        let bnorm = bx.amax().max(by.amax()).max(bz.amax()).max(1e-300);
        for _ in 0..3 {
            let dz = w.apply(Op::Winv, &wdz);
            let rx = bx - p.a.transpose() * &dy - p.g.transpose() * &dz;
            let ry = by - &p.a * &dx;
            let rz = bz - &p.g * &dx + w.apply(Op::Wt, &wdz);
            if rx.amax().max(ry.amax()).max(rz.amax()) <= 1e-15 * bnorm {
                break;
            }
            let (cx, cy, cz) = self.reduced(w, &rx, &ry, &rz)?;
            dx += cx;
            dy += cy;
            wdz += cz;
        }
        if dx.iter().chain(dy.iter()).chain(wdz.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite Newton direction".into()));
        }
        Ok((dx, dy, wdz))
    }
}

// ---------------------------------------------------------------------------
// main loop

struct Residuals {
    rx: DVector<f64>,
    ry: DVector<f64>,
    rz: DVector<f64>,
    rt: f64,
}

/// Solve a conic problem. Returns the optimal primal-dual pair or an
/// infeasibility / unboundedness / non-convergence error.
pub fn solve_conic(p: &ConicProblem, settings: &IpmSettings) -> Result<ConicSolution> {
    p.check()?;
    let n = p.c.len();
    let np = p.b.len();
    let m = p.h.len();
    let cones = &p.cones;
    let deg = cones.degree() as f64;
    let e = identity(cones);

    let mut x = DVector::zeros(n);
    let mut y = DVector::zeros(np);
    let mut s = e.clone();
    let mut z = e.clone();
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let resx0 = p.c.norm().max(1.0);
    let resy0 = p.b.norm().max(1.0);
    let resz0 = p.h.norm().max(1.0);

    let mut last = (f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::NAN, f64::NAN);
    let mut iterations = 0;
    #[allow(clippy::type_complexity)]
    let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>, f64, usize, f64, f64, f64, f64)> = None;

    for iter in 0..=settings.max_iter {
        iterations = iter;
        let res = Residuals {
            rx: p.a.transpose() * &y + p.g.transpose() * &z + &p.c * tau,
            ry: &p.b * tau - &p.a * &x,
            rz: &p.h * tau - &p.g * &x - &s,
            rt: -p.c.dot(&x) - p.b.dot(&y) - p.h.dot(&z) - kappa,
        };
        let cx = p.c.dot(&x);
        let byhz = p.b.dot(&y) + p.h.dot(&z);
        let pcost = cx / tau;
        let dcost = -byhz / tau;
        let gap = s.dot(&z) / (tau * tau);
        let pres = ((&p.a * &x / tau - &p.b).norm() / resy0).max((&p.g * &x / tau + &s / tau - &p.h).norm() / resz0);
        let dres = (p.a.transpose() * &y / tau + p.g.transpose() * &z / tau + &p.c).norm() / resx0;
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        last = (pres, dres, gap, relgap, pcost, dcost);

        // keep the best iterate meeting the looser thresholds; stop once the
        // residuals have clearly drifted away from it
        let merit = pres.max(dres).max(gap.min(relgap));
        if settings.acceptable(pres, dres, gap, relgap, pcost) && best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone(), s.clone(), tau, iter, pcost, dcost, pres, dres));
        }
        if let Some(b) = &best {
            if merit > 100.0 * b.0 {
                break;
            }
        }

        if pres <= settings.feastol && dres <= settings.feastol && (gap <= settings.abstol || relgap <= settings.reltol) {
            return Ok(finish(x, y, z, s, tau, iter, pcost, dcost, pres, dres));
        }
        if byhz < 0.0 {
            let pinf = (p.a.transpose() * &y + p.g.transpose() * &z).norm() / resx0 / -byhz;
            if pinf <= settings.feastol {
                let mut cert: Vec<f64> = y.iter().copied().collect();
                cert.extend(z.iter().copied());
                let scale = -byhz;
                return Err(Error::Infeasible { residual: pinf, certificate: cert.into_iter().map(|v| v / scale).collect() });
            }
        }
        if cx < 0.0 {
            let dinf = ((&p.a * &x).norm() / resy0).max((&p.g * &x + &s).norm() / resz0) / -cx;
            if dinf <= settings.feastol {
                return Err(Error::Unbounded { residual: dinf });
            }
        }
        if iter == settings.max_iter {
            break;
        }

        let mu = (s.dot(&z) + tau * kappa) / (deg + 1.0);
        let w = match Scaling::new(cones, &s, &z) {
            Ok(w) => w,
            Err(_) => break,
        };
        let lambda = w.lambda.clone();
        let lsq = jordan_prod(cones, &lambda, &lambda);
        let kkt = KktFactor::new(p, &w);

        // direction associated with τ
        let (x1, y1, wz1) = match kkt.solve(p, &w, &(-&p.c), &p.b, &p.h) {
            Ok(v) => v,
            Err(_) => break,
        };
        let z1 = w.apply(Op::Winv, &wz1);
        let p1 = p.c.dot(&x1) + p.b.dot(&y1) + p.h.dot(&z1);

        let direction = |sigma: f64, rc: &DVector<f64>, rk: f64| -> Result<Direction> {
            let f = 1.0 - sigma;
            let ldiv = jordan_div(cones, &lambda, rc);
            let bz = &res.rz * f - w.apply(Op::Wt, &ldiv);
            let (x2, y2, wz2) = kkt.solve(p, &w, &(&res.rx * -f), &(&res.ry * f), &bz)?;
            let z2 = w.apply(Op::Winv, &wz2);
            let p2 = p.c.dot(&x2) + p.b.dot(&y2) + p.h.dot(&z2);
            let dtau = (p2 + rk / tau - f * res.rt) / (kappa / tau - p1);
            let dx = &x2 + &x1 * dtau;
            let dy = &y2 + &y1 * dtau;
            let wdz = &wz2 + &wz1 * dtau;
            let dz = w.apply(Op::Winv, &wdz);
            // scaled ds: W⁻ᵀ ds = λ ⋄ r_c − W dz
            let sds = &ldiv - &wdz;
            let ds = w.apply(Op::Wt, &sds);
            let dkappa = (rk - kappa * dtau) / tau;
            Ok(Direction { dx, dy, dz, ds, dtau, dkappa, wdz, sds })
        };

        let step_to_boundary = |d: &Direction| -> f64 {
            let mut a = max_step(cones, &s, &d.ds).min(max_step(cones, &z, &d.dz));
            if d.dtau < 0.0 {
                a = a.min(-tau / d.dtau);
            }
            if d.dkappa < 0.0 {
                a = a.min(-kappa / d.dkappa);
            }
            a
        };

        let aff = match direction(0.0, &(-&lsq), -tau * kappa) {
            Ok(d) => d,
            Err(_) => break,
        };
        let alpha_aff = step_to_boundary(&aff).min(1.0);
        let sigma = (1.0 - alpha_aff).powi(3);

        let rc = &e * (sigma * mu) - &lsq - jordan_prod(cones, &aff.sds, &aff.wdz);
        let rk = sigma * mu - tau * kappa - aff.dtau * aff.dkappa;
        let d = match direction(sigma, &rc, rk) {
            Ok(d) => d,
            Err(_) => break,
        };
        let alpha = (0.99 * step_to_boundary(&d)).min(1.0);
        if !(alpha > 1e-14) {
            break;
        }
        x += &d.dx * alpha;
        y += &d.dy * alpha;
        z += &d.dz * alpha;
        s += &d.ds * alpha;
        tau += alpha * d.dtau;
        kappa += alpha * d.dkappa;
        if !(tau > 0.0 && kappa > 0.0) || x.iter().any(|v| !v.is_finite()) {
            break;
        }
        let _ = m;
    }

    if let Some((_, x, y, z, s, tau, iter, pcost, dcost, pres, dres)) = best {
        return Ok(finish(x, y, z, s, tau, iter, pcost, dcost, pres, dres));
    }
    let (pres, dres, gap, _, _, _) = last;
    Err(Error::SolverNonConvergence { iterations, gap, pres, dres })
}

struct Direction {
    dx: DVector<f64>,
    dy: DVector<f64>,
    dz: DVector<f64>,
    ds: DVector<f64>,
    dtau: f64,
    dkappa: f64,
    wdz: DVector<f64>,
    sds: DVector<f64>,
}

#[allow(clippy::too_many_arguments)]
fn finish(
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
    tau: f64,
    iterations: usize,
    pcost: f64,
    dcost: f64,
    pres: f64,
    dres: f64,
) -> ConicSolution {
    let x = x / tau;
    let y = y / tau;
    let z = z / tau;
    let s = s / tau;
    let gap = s.dot(&z);
    ConicSolution { x, y, z, s, iterations, pcost, dcost, gap, pres, dres }
}
