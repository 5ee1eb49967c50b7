//! Stratified Lie groups given by their strata, anisotropic dilations, and the
//! first-order polynomial form of the generating left-invariant vector fields
//!
//!     X_k = d/dx'_k + sum_{l>=2} sum_m a_{k,m}^{(l)}(x', ..., x^{(l-1)}) d/dx_m^{(l)}.
//!
//! Coefficients are stored as exact sparse monomial lists, so evaluation and the
//! symbolic commutator used for the rank check involve no floating-point
//! approximation beyond the arithmetic itself.

use crate::error::{Error, Result};

/// One term `coeff * prod_i x_i^{exponents[i]}` of a polynomial over the group
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Sparse polynomial over the n group coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    n_vars: usize,
    terms: Vec<Monomial>,
}

impl Polynomial {
    pub fn zero(n_vars: usize) -> Self {
        Polynomial { n_vars, terms: Vec::new() }
    }

    pub fn constant(n_vars: usize, c: f64) -> Self {
        let mut p = Polynomial::zero(n_vars);
        if c != 0.0 {
            p.terms.push(Monomial { coeff: c, exponents: vec![0; n_vars] });
        }
        p
    }

    /// The polynomial `c * x_var`.
    pub fn linear(n_vars: usize, var: usize, c: f64) -> Self {
        let mut exps = vec![0u32; n_vars];
        exps[var] = 1;
        Polynomial { n_vars, terms: vec![Monomial { coeff: c, exponents: exps }] }
    }

    pub fn from_terms(n_vars: usize, terms: Vec<Monomial>) -> Self {
        let mut p = Polynomial { n_vars, terms };
        p.normalize();
        p
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for t in &self.terms {
            let mut v = t.coeff;
            for (i, &e) in t.exponents.iter().enumerate() {
                for _ in 0..e {
                    v *= x[i];
                }
            }
            acc += v;
        }
        acc
    }

    fn normalize(&mut self) {
        // merge duplicate exponent vectors, drop zero coefficients
        self.terms.sort_by(|a, b| a.exponents.cmp(&b.exponents));
        let mut merged: Vec<Monomial> = Vec::with_capacity(self.terms.len());
        for t in self.terms.drain(..) {
            match merged.last_mut() {
                Some(last) if last.exponents == t.exponents => last.coeff += t.coeff,
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != 0.0);
        self.terms = merged;
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n_vars, other.n_vars);
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Polynomial::from_terms(self.n_vars, terms)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .map(|t| Monomial { coeff: t.coeff * s, exponents: t.exponents.clone() })
            .collect();
        Polynomial::from_terms(self.n_vars, terms)
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.n_vars, other.n_vars);
        let mut terms = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                let exps = a
                    .exponents
                    .iter()
                    .zip(&b.exponents)
                    .map(|(x, y)| x + y)
                    .collect();
                terms.push(Monomial { coeff: a.coeff * b.coeff, exponents: exps });
            }
        }
        Polynomial::from_terms(self.n_vars, terms)
    }

    pub fn derivative(&self, var: usize) -> Polynomial {
        let mut terms = Vec::new();
        for t in &self.terms {
            let e = t.exponents[var];
            if e > 0 {
                let mut exps = t.exponents.clone();
                exps[var] = e - 1;
                terms.push(Monomial { coeff: t.coeff * e as f64, exponents: exps });
            }
        }
        Polynomial::from_terms(self.n_vars, terms)
    }

    /// Highest variable index appearing with a nonzero exponent, if any.
    pub fn max_var(&self) -> Option<usize> {
        self.terms
            .iter()
            .flat_map(|t| {
                t.exponents
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, _)| i)
            })
            .max()
    }
}

/// Coefficient polynomial `a_{k,m}^{(l)}` attached to the coordinate with flat
/// index `target` (a coordinate of some stratum l >= 2).
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffEntry {
    pub target: usize,
    pub poly: Polynomial,
}

/// A stratified Lie group described by strata dimensions and the coefficient
/// table of its generating horizontal vector fields. Immutable after
/// construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct StratifiedGroup {
    name: String,
    strata_dims: Vec<usize>,
    n: usize,
    /// coeffs[k-1] lists the higher-strata coefficient polynomials of X_k,
    /// sorted by target coordinate.
    coeffs: Vec<Vec<CoeffEntry>>,
}

/// A point of the group, coordinates partitioned by strata as
/// (x', x^(2), ..., x^(r)).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub coords: Vec<f64>,
}

impl GroupPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        GroupPoint { coords }
    }
}

impl StratifiedGroup {
    /// Abelian group R^n: a single stratum, X_k = d/dx_k.
    pub fn make_euclidean(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("euclidean group needs n >= 1".into()));
        }
        Ok(StratifiedGroup {
            name: format!("euclidean:{n}"),
            strata_dims: vec![n],
            n,
            coeffs: vec![Vec::new(); n],
        })
    }

    /// Heisenberg group H^d with first stratum (x_1..x_d, y_1..y_d) and a
    /// one-dimensional center z:
    ///
    ///   X_i     = d/dx_i - (y_i/2) d/dz
    ///   X_{d+i} = d/dy_i + (x_i/2) d/dz
    ///
    /// The symmetric +-1/2 coefficient convention is fixed here; it yields
    /// [X_i, X_{d+i}] = d/dz.
    pub fn make_heisenberg(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidDimension("heisenberg group needs d >= 1".into()));
        }
        let n = 2 * d + 1;
        let z = 2 * d;
        let mut coeffs = vec![Vec::new(); 2 * d];
        for i in 0..d {
            // X_i: coefficient -y_i/2 on z
            coeffs[i].push(CoeffEntry { target: z, poly: Polynomial::linear(n, d + i, -0.5) });
            // X_{d+i}: coefficient +x_i/2 on z
            coeffs[d + i].push(CoeffEntry { target: z, poly: Polynomial::linear(n, i, 0.5) });
        }
        let g = StratifiedGroup {
            name: format!("heisenberg:{d}"),
            strata_dims: vec![2 * d, 1],
            n,
            coeffs,
        };
        g.validate_stratification()?;
        debug_assert!(g.rank_condition_step2());
        Ok(g)
    }

    /// Group from an explicit coefficient table. The stratification invariant
    /// is validated; the rank condition is NOT checked for custom groups.
    pub fn custom(name: &str, strata_dims: Vec<usize>, coeffs: Vec<Vec<CoeffEntry>>) -> Result<Self> {
        if strata_dims.is_empty() || strata_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidDimension(
                "strata dimensions must be a nonempty list of positive integers".into(),
            ));
        }
        let n = strata_dims.iter().sum();
        if coeffs.len() != strata_dims[0] {
            return Err(Error::InvalidDimension(format!(
                "coefficient table has {} rows, first stratum has dimension {}",
                coeffs.len(),
                strata_dims[0]
            )));
        }
        let mut g = StratifiedGroup { name: name.to_string(), strata_dims, n, coeffs };
        for row in &mut g.coeffs {
            row.sort_by_key(|e| e.target);
        }
        g.validate_stratification()?;
        Ok(g)
    }

    fn validate_stratification(&self) -> Result<()> {
        for (k, row) in self.coeffs.iter().enumerate() {
            for entry in row {
                if entry.target >= self.n {
                    return Err(Error::InvalidIndex { index: entry.target + 1, max: self.n });
                }
                let l = self.stratum_of(entry.target);
                if l < 2 {
                    return Err(Error::InvalidDimension(format!(
                        "X_{}: coefficient target {} lies in the first stratum",
                        k + 1,
                        entry.target + 1
                    )));
                }
                // the polynomial may only involve coordinates of strata < l
                if let Some(v) = entry.poly.max_var() {
                    if self.stratum_of(v) >= l {
                        return Err(Error::InvalidDimension(format!(
                            "X_{}: coefficient for stratum-{} coordinate depends on stratum-{} coordinate",
                            k + 1,
                            l,
                            self.stratum_of(v)
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n1(&self) -> usize {
        self.strata_dims[0]
    }

    pub fn step(&self) -> usize {
        self.strata_dims.len()
    }

    pub fn strata_dims(&self) -> &[usize] {
        &self.strata_dims
    }

    /// Stratum (1-based) that the flat coordinate index belongs to.
    pub fn stratum_of(&self, axis: usize) -> usize {
        let mut acc = 0;
        for (l, &d) in self.strata_dims.iter().enumerate() {
            acc += d;
            if axis < acc {
                return l + 1;
            }
        }
        self.strata_dims.len()
    }

    pub fn coeff_entries(&self, k: usize) -> &[CoeffEntry] {
        &self.coeffs[k - 1]
    }

    /// Homogeneous dimension Q = sum_l l * N_l.
    pub fn homogeneous_dimension(&self) -> usize {
        self.strata_dims
            .iter()
            .enumerate()
            .map(|(l, &d)| (l + 1) * d)
            .sum()
    }

    /// Anisotropic dilation: the stratum-l block is scaled by lambda^l.
    pub fn dilate(&self, lambda: f64, x: &GroupPoint) -> Result<GroupPoint> {
        if !(lambda > 0.0) {
            return Err(Error::InvalidScale(lambda));
        }
        if x.coords.len() != self.n {
            return Err(Error::InvalidDimension(format!(
                "point has {} coordinates, group dimension is {}",
                x.coords.len(),
                self.n
            )));
        }
        let coords = x
            .coords
            .iter()
            .enumerate()
            .map(|(i, &c)| lambda.powi(self.stratum_of(i) as i32) * c)
            .collect();
        Ok(GroupPoint::new(coords))
    }

    /// Coefficient vector c of X_k at x, so that X_k u(x) = sum_j c_j du/dx_j(x).
    pub fn coeff_vector(&self, k: usize, x: &[f64]) -> Result<Vec<f64>> {
        if k == 0 || k > self.n1() {
            return Err(Error::InvalidIndex { index: k, max: self.n1() });
        }
        if x.len() != self.n {
            return Err(Error::InvalidDimension(format!(
                "point has {} coordinates, group dimension is {}",
                x.len(),
                self.n
            )));
        }
        let mut c = vec![0.0; self.n];
        c[k - 1] = 1.0;
        for entry in &self.coeffs[k - 1] {
            c[entry.target] = entry.poly.eval(x);
        }
        Ok(c)
    }

    /// X_k as a symbolic vector of coefficient polynomials (length n).
    pub fn vector_field(&self, k: usize) -> Result<Vec<Polynomial>> {
        if k == 0 || k > self.n1() {
            return Err(Error::InvalidIndex { index: k, max: self.n1() });
        }
        let mut v = vec![Polynomial::zero(self.n); self.n];
        v[k - 1] = Polynomial::constant(self.n, 1.0);
        for entry in &self.coeffs[k - 1] {
            v[entry.target] = entry.poly.clone();
        }
        Ok(v)
    }

    /// Symbolic commutator [A, B] of two polynomial vector fields:
    /// [A,B]_j = sum_i (A_i dB_j/dx_i - B_i dA_j/dx_i).
    pub fn commutator(a: &[Polynomial], b: &[Polynomial]) -> Vec<Polynomial> {
        let n = a.len();
        let mut out = Vec::with_capacity(n);
        for j in 0..n {
            let mut acc = Polynomial::zero(a[j].n_vars());
            for i in 0..n {
                if !a[i].is_zero() {
                    acc = acc.add(&a[i].mul(&b[j].derivative(i)));
                }
                if !b[i].is_zero() {
                    acc = acc.add(&b[i].mul(&a[j].derivative(i)).scale(-1.0));
                }
            }
            out.push(acc);
        }
        out
    }

    /// Rank check for groups of step <= 2: the X_k together with all pairwise
    /// commutators, evaluated at the origin, must span R^n.
    pub fn rank_condition_step2(&self) -> bool {
        if self.step() == 1 {
            return true;
        }
        let origin = vec![0.0; self.n];
        let fields: Vec<Vec<Polynomial>> = (1..=self.n1())
            .map(|k| self.vector_field(k).expect("valid index"))
            .collect();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for f in &fields {
            rows.push(f.iter().map(|p| p.eval(&origin)).collect());
        }
        for i in 0..fields.len() {
            for j in (i + 1)..fields.len() {
                let c = Self::commutator(&fields[i], &fields[j]);
                rows.push(c.iter().map(|p| p.eval(&origin)).collect());
            }
        }
        matrix_rank(&mut rows) == self.n
    }
}

/// Rank by Gaussian elimination with partial pivoting; rows are consumed.
fn matrix_rank(rows: &mut [Vec<f64>]) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let ncols = rows[0].len();
    let mut rank = 0;
    for col in 0..ncols {
        let Some(pivot) = (rank..rows.len()).max_by(|&a, &b| {
            rows[a][col]
                .abs()
                .partial_cmp(&rows[b][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        }) else {
            break;
        };
        if rows[pivot][col].abs() < 1e-12 {
            continue;
        }
        rows.swap(rank, pivot);
        for r in (rank + 1)..rows.len() {
            let factor = rows[r][col] / rows[rank][col];
            if factor != 0.0 {
                for c in col..ncols {
                    rows[r][c] -= factor * rows[rank][c];
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euclidean_construction() {
        let g = StratifiedGroup::make_euclidean(3).unwrap();
        assert_eq!(g.n1(), 3);
        assert_eq!(g.step(), 1);
        assert!(g.coeffs.iter().all(|row| row.is_empty()));

        let line = StratifiedGroup::make_euclidean(1).unwrap();
        assert_eq!(line.n(), 1);
        assert_eq!(line.n1(), 1);

        assert!(matches!(StratifiedGroup::make_euclidean(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn heisenberg_construction() {
        let g = StratifiedGroup::make_heisenberg(1).unwrap();
        assert_eq!(g.strata_dims(), &[2, 1]);
        assert_eq!(g.n(), 3);
        // a_{1,1}^{(2)} = -y/2, a_{2,1}^{(2)} = +x/2
        assert_eq!(g.coeffs[0][0].poly.eval(&[0.0, 1.0, 0.0]), -0.5);
        assert_eq!(g.coeffs[1][0].poly.eval(&[1.0, 0.0, 0.0]), 0.5);

        let g2 = StratifiedGroup::make_heisenberg(2).unwrap();
        assert_eq!(g2.strata_dims(), &[4, 1]);
        assert_eq!(g2.n(), 5);

        assert!(matches!(StratifiedGroup::make_heisenberg(0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn heisenberg_bracket_symbolic() {
        // the commutator oracle: [X_1, X_2] must equal d/dz exactly
        let g = StratifiedGroup::make_heisenberg(1).unwrap();
        let x1 = g.vector_field(1).unwrap();
        let x2 = g.vector_field(2).unwrap();
        let c = StratifiedGroup::commutator(&x1, &x2);
        assert!(c[0].is_zero());
        assert!(c[1].is_zero());
        assert_eq!(c[2], Polynomial::constant(3, 1.0));
    }

    #[test]
    fn rank_condition_builtins() {
        assert!(StratifiedGroup::make_euclidean(4).unwrap().rank_condition_step2());
        assert!(StratifiedGroup::make_heisenberg(1).unwrap().rank_condition_step2());
        assert!(StratifiedGroup::make_heisenberg(3).unwrap().rank_condition_step2());
    }

    #[test]
    fn dilation_examples() {
        let h = StratifiedGroup::make_heisenberg(1).unwrap();
        let p = h.dilate(2.0, &GroupPoint::new(vec![1.0, 1.0, 1.0])).unwrap();
        assert_eq!(p.coords, vec![2.0, 2.0, 4.0]);

        let same = h.dilate(1.0, &GroupPoint::new(vec![0.3, -0.7, 2.0])).unwrap();
        assert_eq!(same.coords, vec![0.3, -0.7, 2.0]);

        let e = StratifiedGroup::make_euclidean(3).unwrap();
        let q = e.dilate(0.5, &GroupPoint::new(vec![2.0, 2.0, 2.0])).unwrap();
        assert_eq!(q.coords, vec![1.0, 1.0, 1.0]);

        assert!(matches!(
            h.dilate(0.0, &GroupPoint::new(vec![0.0; 3])),
            Err(Error::InvalidScale(_))
        ));
        assert!(matches!(
            h.dilate(-2.0, &GroupPoint::new(vec![0.0; 3])),
            Err(Error::InvalidScale(_))
        ));
    }

    #[test]
    fn dilation_composition() {
        // power-of-two scales compose bit-exactly; generic scales to a few ulp
        let g = StratifiedGroup::make_heisenberg(2).unwrap();
        let x = GroupPoint::new(vec![0.37, -1.2, 0.05, 2.0, -0.9]);
        for &(la, mu) in &[(0.5, 2.0), (2.0, 2.0), (0.5, 0.5), (1.0, 3.0), (3.0, 3.0), (3.0, 0.5)] {
            let a = g.dilate(la, &g.dilate(mu, &x).unwrap()).unwrap();
            let b = g.dilate(la * mu, &x).unwrap();
            for (u, v) in a.coords.iter().zip(&b.coords) {
                assert!((u - v).abs() <= 4.0 * f64::EPSILON * v.abs().max(1.0), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn coeff_vector_examples() {
        let e = StratifiedGroup::make_euclidean(3).unwrap();
        assert_eq!(e.coeff_vector(1, &[0.2, 0.4, 0.6]).unwrap(), vec![1.0, 0.0, 0.0]);

        let h = StratifiedGroup::make_heisenberg(1).unwrap();
        let x = [0.4, 1.0, -2.0];
        assert_eq!(h.coeff_vector(1, &x).unwrap(), vec![1.0, 0.0, -0.5]);
        assert_eq!(h.coeff_vector(2, &x).unwrap(), vec![0.0, 1.0, 0.2]);

        assert!(matches!(h.coeff_vector(0, &x), Err(Error::InvalidIndex { .. })));
        assert!(matches!(h.coeff_vector(3, &x), Err(Error::InvalidIndex { .. })));
    }

    #[test]
    fn coefficient_stratification() {
        // coeff_vector entries of stratum l only depend on strata < l: vary z
        let h = StratifiedGroup::make_heisenberg(1).unwrap();
        let a = h.coeff_vector(1, &[0.4, 1.0, -2.0]).unwrap();
        let b = h.coeff_vector(1, &[0.4, 1.0, 17.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn homogeneous_dimension_examples() {
        assert_eq!(StratifiedGroup::make_euclidean(3).unwrap().homogeneous_dimension(), 3);
        assert_eq!(StratifiedGroup::make_heisenberg(1).unwrap().homogeneous_dimension(), 4);
        assert_eq!(StratifiedGroup::make_heisenberg(2).unwrap().homogeneous_dimension(), 6);
    }

    #[test]
    fn custom_group_validation() {
        // stratification violation: coefficient of the center depending on z itself
        let n = 3;
        let bad = vec![
            vec![CoeffEntry { target: 2, poly: Polynomial::linear(n, 2, 1.0) }],
            vec![],
        ];
        assert!(StratifiedGroup::custom("bad", vec![2, 1], bad).is_err());

        let ok = vec![
            vec![CoeffEntry { target: 2, poly: Polynomial::linear(n, 1, -0.5) }],
            vec![CoeffEntry { target: 2, poly: Polynomial::linear(n, 0, 0.5) }],
        ];
        assert!(StratifiedGroup::custom("h1", vec![2, 1], ok).is_ok());
    }
}
