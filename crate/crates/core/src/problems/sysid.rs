//! Streaming identification of a stable linear system `Z_{k+1} = A⋆Z_k + w_k`
//! by SGD on `A`, with `‖w_k‖ ≤ B` (uniform on the ball).
//!
//! The decision variable is `A` flattened row-major. With `Σ` the stationary
//! covariance of `Z`, `f(A) = ½tr((A − A⋆)Σ(A − A⋆)ᵀ)`, `g(A, Z) = (A − A⋆)ZZᵀ`
//! and the martingale part is `M = −w Zᵀ`, so `G = (AZ_k − Z_{k+1})Z_kᵀ`.
//! `A⋆` is built symmetric, which makes `‖A⋆‖₂` equal its spectral radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian, gaussian_vec, MixingInfo, Problem, ProblemConstants, ProblemError};
use crate::linalg::{discrete_lyapunov, dot, norm, norm_sq, symmetric_eigen, Matrix};
use crate::report::{Report, Tally};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysIdConfig {
    pub dim: usize,
    /// Eigenvalues of `A⋆`; defaults to an even spread from `lambda_max`
    /// down to `−lambda_max/2`.
    #[serde(default)]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    pub noise_bound: f64,
    #[serde(default)]
    pub instance_seed: u64,
    /// Multiplier `c` in `t̂ = ⌈log 2 / log(1/λ)⌉·c`.
    #[serde(default = "default_tmix_calibration")]
    pub tmix_calibration: f64,
    /// Steps from `Z = 0` used to approximate a stationary draw.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_lambda_max() -> f64 {
    0.7
}

fn default_tmix_calibration() -> f64 {
    2.0
}

fn default_burn_in() -> usize {
    400
}

impl Default for SysIdConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            eigenvalues: Some(vec![0.7, 0.4, -0.2]),
            lambda_max: default_lambda_max(),
            noise_bound: 1.0,
            instance_seed: 17,
            tmix_calibration: default_tmix_calibration(),
            burn_in: default_burn_in(),
        }
    }
}

impl SysIdConfig {
    pub fn build<T: Scalar>(&self) -> Result<SysId<T>, ProblemError> {
        let d = self.dim;
        if d == 0 {
            return Err(ProblemError::InvalidConfig("dim must be positive".into()));
        }
        let eig = match &self.eigenvalues {
            Some(e) if e.len() != d => {
                return Err(ProblemError::InvalidConfig(format!("{} eigenvalues for dim {d}", e.len())))
            }
            Some(e) => e.clone(),
            None if d == 1 => vec![self.lambda_max],
            None => (0..d).map(|i| self.lambda_max * (1.0 - 1.5 * i as f64 / (d - 1) as f64)).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.instance_seed);
        let q = random_orthogonal::<T, _>(d, &mut rng);
        let diag = Matrix::diagonal(&eig.iter().map(|&v| T::lit(v)).collect::<Vec<_>>());
        let a_star = q.matmul(&diag).matmul(&q.transpose());
        let a_star = Matrix::from_fn(d, d, |i, j| T::lit(0.5) * (a_star[(i, j)] + a_star[(j, i)]));
        SysId::new(a_star, T::lit(self.noise_bound), self.tmix_calibration, self.burn_in)
    }
}

fn random_orthogonal<T: Scalar, R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix<T> {
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<T> = gaussian_vec(d, rng);
        for c in &cols {
            let p = dot(&v, c);
            crate::linalg::axpy(&mut v, -p, c);
        }
        let n = norm(&v);
        if n > T::lit(1e-8) {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    Matrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Uniform draw from the closed ball of radius `radius` in `R^d`.
pub fn sample_ball<T: Scalar, R: Rng + ?Sized>(d: usize, radius: T, rng: &mut R) -> Vec<T> {
    if radius == T::zero() {
        return vec![T::zero(); d];
    }
    loop {
        let v: Vec<T> = (0..d).map(|_| gaussian(rng)).collect();
        let n = norm(&v);
        if n > T::zero() {
            let r = radius * T::lit(rng.random::<f64>().powf(1.0 / d as f64));
            return v.into_iter().map(|x| x * r / n).collect();
        }
    }
}

/// `A_{k+1} = A_k − α(A_kZ_k − Z_{k+1})Z_kᵀ`.
pub fn sysid_grad_update<T: Scalar>(a_k: &Matrix<T>, z_k: &[T], z_k1: &[T], alpha: T) -> Matrix<T> {
    let az = a_k.mul_vec(z_k);
    Matrix::from_fn(a_k.rows(), a_k.cols(), |i, j| a_k[(i, j)] - alpha * (az[i] - z_k1[i]) * z_k[j])
}

#[derive(Clone, Debug)]
pub struct SysId<T> {
    a_star: Matrix<T>,
    lambda_max: T,
    noise_bound: T,
    sigma: Matrix<T>,
    mu_min: T,
    mu_max: T,
    burn_in: usize,
    constants: ProblemConstants<T>,
    mixing: MixingInfo,
}

impl<T: Scalar> SysId<T> {
    pub fn new(a_star: Matrix<T>, noise_bound: T, tmix_calibration: f64, burn_in: usize) -> Result<Self, ProblemError> {
        let d = a_star.rows();
        if !a_star.is_square() || d == 0 {
            return Err(ProblemError::InvalidConfig("A⋆ must be square".into()));
        }
        if !(noise_bound >= T::zero()) {
            return Err(ProblemError::InvalidConfig("noise bound must be nonnegative".into()));
        }
        let spectrum = symmetric_eigen(&a_star)?.values;
        let lambda_max = spectrum.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
        if !(lambda_max < T::one()) {
            return Err(ProblemError::InvalidConfig(format!("spectral radius {lambda_max} is not below 1")));
        }
        // Uniform on the radius-B ball: E[wwᵀ] = B²/(d+2)·I.
        let cov_w = Matrix::identity(d).scale(noise_bound * noise_bound / T::from_count(d + 2));
        let sigma = discrete_lyapunov(&a_star, &cov_w)?;
        let sig_eig = symmetric_eigen(&sigma)?.values;
        let (mu_min, mu_max) = (sig_eig[0], sig_eig[d - 1]);
        if !(mu_min > T::tol(1e-12) * mu_max.max(T::min_positive_value())) || !(mu_min > T::zero()) {
            return Err(ProblemError::DegenerateCovariance(mu_min.to_f64_lossy()));
        }
        let kappa = T::one() / (T::one() - lambda_max);
        let b2 = noise_bound * noise_bound;
        let b4 = b2 * b2;
        let constants = ProblemConstants {
            mu: mu_min,
            l: mu_max,
            a: T::zero(),
            // ‖G‖² ≤ 2‖g‖² + 2‖wZᵀ‖² with ‖g‖² ≤ 2B⁴κ⁴ℒ/μ_min and ‖wZᵀ‖² ≤ B⁴κ².
            b: T::lit(4.0) * b4 * kappa.powi(4) / mu_min,
            c: T::lit(2.0) * b4 * kappa * kappa,
            l_g: b2 * kappa * kappa,
        };
        let lam = lambda_max.to_f64_lossy();
        let tmix = if lam <= 0.0 {
            1
        } else {
            (((2f64.ln() / (1.0 / lam).ln()).ceil().max(1.0)) * tmix_calibration).ceil().max(1.0) as usize
        };
        let mixing = MixingInfo {
            tmix,
            certified: false,
            method: format!("contraction estimate ceil(log 2 / log(1/λ))·{tmix_calibration}"),
        };
        Ok(Self { a_star, lambda_max, noise_bound, sigma, mu_min, mu_max, burn_in, constants, mixing })
    }

    pub fn a_star(&self) -> &Matrix<T> {
        &self.a_star
    }

    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    pub fn noise_bound(&self) -> T {
        self.noise_bound
    }

    /// Stationary covariance `Σ = A⋆ΣA⋆ᵀ + Cov(w)`.
    pub fn sigma(&self) -> &Matrix<T> {
        &self.sigma
    }

    pub fn sigma_extremes(&self) -> (T, T) {
        (self.mu_min, self.mu_max)
    }

    pub fn state_dim(&self) -> usize {
        self.a_star.rows()
    }

    /// `‖Z_k‖ ≤ max{‖Z_0‖, B/(1−λ)}`.
    pub fn state_norm_bound(&self, z0: &[T]) -> T {
        norm(z0).max(self.noise_bound / (T::one() - self.lambda_max))
    }

    /// Long-run average of `ZZᵀ` after `burn_in` steps.
    pub fn estimate_covariance<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> Matrix<T> {
        let d = self.state_dim();
        let mut z = vec![T::zero(); d];
        for _ in 0..self.burn_in {
            z = self.advance(&z, rng);
        }
        let mut acc = Matrix::zeros(d, d);
        for _ in 0..steps {
            z = self.advance(&z, rng);
            for i in 0..d {
                for j in 0..d {
                    acc[(i, j)] += z[i] * z[j];
                }
            }
        }
        acc.scale(T::one() / T::from_count(steps.max(1)))
    }

    /// Pathwise bounds along a `steps`-long path from `Z_0 = 0`:
    /// the state-norm bound (exact), the stochastic-gradient bound
    /// `‖(A − A⋆)ZZᵀ‖² ≤ 2B⁴/((1−λ)⁴μ_min)·ℒ(A)` at fresh random `A`, and
    /// `‖wZᵀ‖² ≤ B⁴/(1−λ)²` (exact).
    pub fn verify_pathwise<R: Rng + ?Sized>(&self, steps: usize, rng: &mut R) -> Report {
        let d = self.state_dim();
        let kappa = T::one() / (T::one() - self.lambda_max);
        let b4 = self.noise_bound.powi(4);
        let mut state_tally = Tally::new("sysid_state_norm", 0.0);
        let mut grad_tally = Tally::new("sysid_gradient_growth", 1e-12);
        let mut mart_tally = Tally::new("sysid_martingale_norm", 0.0);
        let mut z = vec![T::zero(); d];
        let bound = self.state_norm_bound(&z);
        for _ in 0..steps {
            let a: Vec<T> = self.a_star.as_slice().iter().map(|&v| v + gaussian::<T, _>(rng)).collect();
            let g = self.markov_gradient(&a, &z);
            grad_tally.observe(norm_sq(&g), T::lit(2.0) * b4 * kappa.powi(4) / self.mu_min * self.objective(&a));
            let next = self.advance(&z, rng);
            let m = self.martingale_noise(&a, &z, &next, rng).expect("sysid carries martingale noise");
            mart_tally.observe(norm_sq(&m), b4 * kappa * kappa);
            state_tally.observe(norm(&next), bound);
            z = next;
        }
        Report { checks: vec![state_tally.finish(), grad_tally.finish(), mart_tally.finish()] }
    }

    fn error_matrix(&self, x: &[T]) -> Matrix<T> {
        let d = self.state_dim();
        Matrix::from_fn(d, d, |i, j| x[i * d + j] - self.a_star[(i, j)])
    }
}

impl<T: Scalar> Problem<T> for SysId<T> {
    type State = Vec<T>;

    fn name(&self) -> &'static str {
        "sysid"
    }

    fn dim(&self) -> usize {
        self.state_dim() * self.state_dim()
    }

    fn objective(&self, x: &[T]) -> T {
        let e = self.error_matrix(x);
        T::lit(0.5) * e.matmul(&self.sigma).matmul(&e.transpose()).trace()
    }

    fn optimal_value(&self) -> T {
        T::zero()
    }

    fn gradient(&self, x: &[T]) -> Vec<T> {
        self.error_matrix(x).matmul(&self.sigma).into_vec()
    }

    fn minimizer(&self) -> Vec<T> {
        self.a_star.as_slice().to_vec()
    }

    fn initial_point(&self) -> Vec<T> {
        vec![T::zero(); self.dim()]
    }

    fn constants(&self) -> ProblemConstants<T> {
        self.constants
    }

    fn mixing(&self) -> MixingInfo {
        self.mixing.clone()
    }

    fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) -> Vec<T> {
        vec![T::zero(); self.state_dim()]
    }

    fn advance<R: Rng + ?Sized>(&self, z: &Vec<T>, rng: &mut R) -> Vec<T> {
        let w = sample_ball(self.state_dim(), self.noise_bound, rng);
        crate::linalg::add(&self.a_star.mul_vec(z), &w)
    }

    fn sample_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut z = vec![T::zero(); self.state_dim()];
        for _ in 0..self.burn_in {
            z = self.advance(&z, rng);
        }
        z
    }

    fn markov_gradient(&self, x: &[T], z: &Vec<T>) -> Vec<T> {
        let ez = self.error_matrix(x).mul_vec(z);
        let d = self.state_dim();
        (0..d * d).map(|idx| ez[idx / d] * z[idx % d]).collect()
    }

    /// `−(Z_{k+1} − A⋆Z_k) Z_kᵀ`.
    fn martingale_noise<R: Rng + ?Sized>(&self, _x: &[T], z: &Vec<T>, next: &Vec<T>, _rng: &mut R) -> Option<Vec<T>> {
        let w = crate::linalg::sub(next, &self.a_star.mul_vec(z));
        let d = self.state_dim();
        Some((0..d * d).map(|idx| -w[idx / d] * z[idx % d]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_is_deterministic_orbit() {
        let a = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, -0.25]]).unwrap();
        // B = 0 gives a degenerate covariance, so drive the dynamics directly.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = sample_ball::<f64, _>(2, 0.0, &mut rng);
        assert_eq!(w, vec![0.0, 0.0]);
        let z1 = crate::linalg::add(&a.mul_vec(&[1.0, 1.0]), &w);
        assert_eq!(z1, vec![0.5, -0.25]);
    }

    #[test]
    fn zero_state_matrix_has_noise_covariance() {
        let s = SysId::<f64>::new(Matrix::zeros(3, 3), 1.0, 2.0, 10).unwrap();
        for i in 0..3 {
            assert!((s.sigma()[(i, i)] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn update_matches_expansion() {
        let a = Matrix::<f64>::from_rows(&[vec![0.1, 0.2], vec![-0.3, 0.4]]).unwrap();
        let (z, z1, alpha) = ([1.0, -2.0], [0.5, 0.25], 0.1);
        let out = sysid_grad_update(&a, &z, &z1, alpha);
        // A z = (-0.3, -1.1); residual r = (-0.8, -1.35).
        let r = [-0.8, -1.35];
        for i in 0..2 {
            for j in 0..2 {
                assert!((out[(i, j)] - (a[(i, j)] - alpha * r[i] * z[j])).abs() < 1e-15);
            }
        }
        assert_eq!(sysid_grad_update(&a, &[0.0, 0.0], &z1, alpha), a);
    }

    #[test]
    fn unstable_system_rejected() {
        let a = Matrix::from_rows(&[vec![1.2]]).unwrap();
        assert!(SysId::<f64>::new(a, 1.0, 2.0, 10).is_err());
    }

    #[test]
    fn desk_instance_constants() {
        let s: SysId<f64> = SysIdConfig::default().build().unwrap();
        assert!((s.lambda_max() - 0.7).abs() < 1e-12);
        assert_eq!(s.mixing().tmix, 4);
        let (lo, hi) = s.sigma_extremes();
        assert!((lo - 0.2 / (1.0 - 0.04)).abs() < 1e-12);
        assert!((hi - 0.2 / (1.0 - 0.49)).abs() < 1e-12);
    }
}
