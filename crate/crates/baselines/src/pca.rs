//! Stochastic PCA channel: top-k principal directions fitted by deflated
//! power iteration, whitened projections plus isotropic Gaussian noise, and
//! the closed-form rate (k/2) ln(1 + 1/sigma^2) of that channel.

use rdprobe_core::{derive_seed, Error, Result, Rng, Tensor};

/// Eigenvalue-change tolerance for power iteration convergence.
const POWER_TOL: f64 = 1e-10;
/// Iteration cap per component before reporting non-convergence.
const POWER_MAX_ITERS: usize = 10_000;
/// The eigenvalue stabilizes before the vector does (its error enters the
/// eigenvalue only squared), so converged components get a bounded polish:
/// iterate until the vector moves at most POLISH_TOL per step.
const POLISH_TOL: f64 = 1e-9;
const POLISH_MAX_ITERS: usize = 200;
/// Components with eigenvalue at or below this cannot be whitened.
const EIGENVALUE_FLOOR: f64 = 1e-10;
/// Fixed stream for power-iteration start vectors; fits are reproducible.
const START_SEED: u64 = 0x50CA_BA5E;

/// Centered orthonormal basis of the leading principal directions.
/// `components` is (k, dim) with unit rows, eigenvalues nonincreasing; the
/// row sign makes each component's largest-magnitude entry positive.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    mean: Vec<f64>,
    components: Tensor<f64>,
    eigenvalues: Vec<f64>,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.components.cols()
    }

    pub fn k(&self) -> usize {
        self.components.rows()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &Tensor<f64> {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// y = C v for the deflated covariance, computed matrix-free:
/// C v = (1/n) Xc^T (Xc v) - sum_j lambda_j (q_j . v) q_j.
fn apply_deflated(
    xc: &[f64],
    n: usize,
    d: usize,
    found: &[(Vec<f64>, f64)],
    v: &[f64],
    xv: &mut [f64],
    y: &mut [f64],
) {
    for (i, t) in xv.iter_mut().enumerate() {
        *t = dot(&xc[i * d..(i + 1) * d], v);
    }
    y.fill(0.0);
    for (i, &t) in xv.iter().enumerate() {
        let row = &xc[i * d..(i + 1) * d];
        for (yj, &xj) in y.iter_mut().zip(row) {
            *yj += t * xj;
        }
    }
    let inv_n = 1.0 / n as f64;
    for yj in y.iter_mut() {
        *yj *= inv_n;
    }
    for (q, lam) in found {
        let c = lam * dot(q, v);
        for (yj, &qj) in y.iter_mut().zip(q) {
            *yj -= c * qj;
        }
    }
}

/// Subtract the projection onto every found component.
fn orthogonalize(v: &mut [f64], found: &[(Vec<f64>, f64)]) {
    for (q, _) in found {
        let c = dot(q, v);
        for (vj, &qj) in v.iter_mut().zip(q) {
            *vj -= c * qj;
        }
    }
}

/// Flip so the largest-magnitude entry is positive; ties take the first index.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Top-k principal directions of the images' covariance (population
/// normalization, divide by n) by power iteration with deflation. Each
/// component iterates until the eigenvalue estimate changes by at most
/// 1e-10, erroring after 10^4 iterations.
pub fn fit_pca(images: &Tensor<f64>, k: usize) -> Result<PcaBasis> {
    if images.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "fit_pca",
            detail: format!("images must be (n, dim), got {:?}", images.shape()),
        });
    }
    let n = images.rows();
    let d = images.cols();
    if k == 0 || k > d {
        return Err(Error::InvalidArg(format!("pca k must be in 1..={d}, got {k}")));
    }
    if n <= k {
        return Err(Error::InvalidArg(format!(
            "pca needs more examples than components, got n={n} for k={k}"
        )));
    }
    if !images.all_finite() {
        return Err(Error::NonFinite { op: "fit_pca", context: "images".into() });
    }

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(images.row(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut xc = Vec::with_capacity(n * d);
    for i in 0..n {
        xc.extend(images.row(i).iter().zip(&mean).map(|(&x, &m)| x - m));
    }

    let mut found: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k);
    let mut xv = vec![0.0; n];
    let mut y = vec![0.0; d];
    for j in 0..k {
        let mut rng = Rng::new(derive_seed(START_SEED, &format!("pca.start.{j}")));
        let mut v = loop {
            let mut cand = rng.gaussian_vec(d);
            orthogonalize(&mut cand, &found);
            let nv = norm(&cand);
            if nv > 1e-12 {
                for x in cand.iter_mut() {
                    *x /= nv;
                }
                break cand;
            }
        };

        let mut prev = f64::INFINITY;
        let mut lam = 0.0;
        let mut delta = f64::INFINITY;
        let mut converged = false;
        for _ in 0..POWER_MAX_ITERS {
            apply_deflated(&xc, n, d, &found, &v, &mut xv, &mut y);
            orthogonalize(&mut y, &found);
            lam = norm(&y);
            if lam > 0.0 {
                for (vj, &yj) in v.iter_mut().zip(y.iter()) {
                    *vj = yj / lam;
                }
            }
            delta = (lam - prev).abs();
            if delta <= POWER_TOL {
                converged = true;
                break;
            }
            prev = lam;
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: format!("pca component {j}"),
                attained: delta,
                tolerance: POWER_TOL,
            });
        }
        for _ in 0..POLISH_MAX_ITERS {
            apply_deflated(&xc, n, d, &found, &v, &mut xv, &mut y);
            orthogonalize(&mut y, &found);
            let l = norm(&y);
            if l == 0.0 {
                break;
            }
            let mut moved = 0.0f64;
            for (vj, &yj) in v.iter_mut().zip(y.iter()) {
                let next = yj / l;
                moved = moved.max((next - *vj).abs());
                *vj = next;
            }
            lam = l;
            if moved <= POLISH_TOL {
                break;
            }
        }
        canonical_sign(&mut v);
        found.push((v.clone(), lam));
    }

    // Deflation yields components in nonincreasing eigenvalue order up to
    // rounding; a stable sort pins the invariant exactly.
    found.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite eigenvalues"));
    let eigenvalues: Vec<f64> = found.iter().map(|(_, lam)| *lam).collect();
    let mut flat = Vec::with_capacity(k * d);
    for (q, _) in &found {
        flat.extend_from_slice(q);
    }
    Ok(PcaBasis { mean, components: Tensor::new(vec![k, d], flat)?, eigenvalues })
}

/// Population covariance matrix of the images, centered. Dense (dim x dim);
/// meant for small dims where `eig_symmetric_dense` is the reference.
pub fn covariance_matrix(images: &Tensor<f64>) -> Result<Tensor<f64>> {
    if images.shape().len() != 2 || images.rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "covariance_matrix",
            detail: format!("images must be nonempty (n, dim), got {:?}", images.shape()),
        });
    }
    let n = images.rows();
    let d = images.cols();
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, &x) in mean.iter_mut().zip(images.row(i)) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut cov = vec![0.0; d * d];
    let mut cx = vec![0.0; d];
    for i in 0..n {
        for (c, (&x, &m)) in cx.iter_mut().zip(images.row(i).iter().zip(&mean)) {
            *c = x - m;
        }
        for a in 0..d {
            let ca = cx[a];
            for b in 0..d {
                cov[a * d + b] += ca * cx[b];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for c in cov.iter_mut() {
        *c *= inv_n;
    }
    Tensor::new(vec![d, d], cov)
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in nonincreasing order and eigenvectors as rows with
/// the same sign convention as `fit_pca`. Reference path for validating the
/// power-iteration fit; cost is O(dim^3) per sweep.
pub fn eig_symmetric_dense(matrix: &Tensor<f64>) -> Result<(Vec<f64>, Tensor<f64>)> {
    let d = matrix.rows();
    if matrix.shape().len() != 2 || matrix.cols() != d || d == 0 {
        return Err(Error::ShapeMismatch {
            op: "eig_symmetric_dense",
            detail: format!("matrix must be square, got {:?}", matrix.shape()),
        });
    }
    let mut scale = 0.0f64;
    for &x in matrix.data() {
        scale = scale.max(x.abs());
    }
    for p in 0..d {
        for q in (p + 1)..d {
            let a = matrix.data()[p * d + q];
            let b = matrix.data()[q * d + p];
            if (a - b).abs() > 1e-9 * (1.0 + scale) {
                return Err(Error::InvalidArg(format!(
                    "matrix is not symmetric: [{p}][{q}]={a} vs [{q}][{p}]={b}"
                )));
            }
        }
    }

    let mut a = matrix.data().to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for p in 0..d {
            for q in 0..d {
                if p != q {
                    s += a[p * d + q] * a[p * d + q];
                }
            }
        }
        s.sqrt()
    };
    let frob: f64 = matrix.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = 1e-14 * frob.max(f64::MIN_POSITIVE);
    let mut attained = off(&a);
    let mut converged = attained <= target;
    for _sweep in 0..100 {
        if converged {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..d {
                    let aip = a[i * d + p];
                    let aiq = a[i * d + q];
                    a[i * d + p] = c * aip - s * aiq;
                    a[i * d + q] = s * aip + c * aiq;
                }
                for i in 0..d {
                    let api = a[p * d + i];
                    let aqi = a[q * d + i];
                    a[p * d + i] = c * api - s * aqi;
                    a[q * d + i] = s * api + c * aqi;
                }
                for i in 0..d {
                    let vip = v[i * d + p];
                    let viq = v[i * d + q];
                    v[i * d + p] = c * vip - s * viq;
                    v[i * d + q] = s * vip + c * viq;
                }
            }
        }
        attained = off(&a);
        converged = attained <= target;
    }
    if !converged {
        return Err(Error::NonConvergence {
            what: "jacobi eigensolver".into(),
            attained,
            tolerance: target,
        });
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].partial_cmp(&a[i * d + i]).expect("finite diagonal"));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * d + i]).collect();
    let mut rows = Vec::with_capacity(d * d);
    for &col in &order {
        let mut row: Vec<f64> = (0..d).map(|i| v[i * d + col]).collect();
        canonical_sign(&mut row);
        rows.extend(row);
    }
    Ok((eigenvalues, Tensor::new(vec![d, d], rows)?))
}

/// Rate of the stochastic PCA channel in nats: (k/2) ln(1 + 1/sigma^2).
/// Whitened unit-variance coordinates plus N(0, sigma^2) noise carry exactly
/// this much Gaussian mutual information.
pub fn pca_rate(k: usize, sigma: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArg("pca rate needs k >= 1".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArg(format!("noise sigma must be positive, got {sigma}")));
    }
    Ok(k as f64 * 0.5 * (1.0 / (sigma * sigma)).ln_1p())
}

/// Whitened projections onto the basis plus N(0, sigma^2) noise per
/// coordinate. Every basis eigenvalue must exceed 1e-10; whitening divides
/// by sqrt(eigenvalue), so smaller ones would blow up.
pub fn stochastic_pca_encode(
    basis: &PcaBasis,
    images: &Tensor<f64>,
    sigma: f64,
    rng: &mut Rng,
) -> Result<Tensor<f64>> {
    if images.shape().len() != 2 || images.cols() != basis.dim() {
        return Err(Error::ShapeMismatch {
            op: "stochastic_pca_encode",
            detail: format!(
                "images {:?} do not match basis dim {}",
                images.shape(),
                basis.dim()
            ),
        });
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArg(format!("noise sigma must be nonnegative, got {sigma}")));
    }
    for (j, &lam) in basis.eigenvalues.iter().enumerate() {
        if lam <= EIGENVALUE_FLOOR {
            return Err(Error::InvalidArg(format!(
                "component {j} has eigenvalue {lam:e} <= {EIGENVALUE_FLOOR:e}; \
                 refit with fewer components before whitening"
            )));
        }
    }
    let n = images.rows();
    let k = basis.k();
    let d = basis.dim();
    let inv_std: Vec<f64> = basis.eigenvalues.iter().map(|&l| 1.0 / l.sqrt()).collect();
    let mut out = Tensor::<f64>::zeros(vec![n, k]);
    let mut cx = vec![0.0; d];
    for i in 0..n {
        for (c, (&x, &m)) in cx.iter_mut().zip(images.row(i).iter().zip(&basis.mean)) {
            *c = x - m;
        }
        for j in 0..k {
            let proj = dot(&cx, basis.components.row(j)) * inv_std[j];
            out.data_mut()[i * k + j] =
                if sigma > 0.0 { proj + sigma * rng.next_gaussian() } else { proj };
        }
    }
    Ok(out)
}
