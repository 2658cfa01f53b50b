//! Strongly invariant measures: the weighted Perron–Frobenius eigenproblem
//! on cylinder words for shift systems, and Haar measure for circle maps.
//!
//! A transition weight V of depth k (with Σ over each fiber equal to 1)
//! determines a unique probability measure ρ with ρ([w]) = V(w₀…w_{k−1}) ·
//! ρ([w₁…]) for deep words; the anchor values on depth-(k−1) words are the
//! stationary vector of an exact rational eigenproblem.

use std::collections::BTreeMap;

use num::{BigInt, One, Zero};
use rand::Rng;

use crate::endo::{DynamicalSystem, Point, SftSystem};
use crate::error::{EndoError, Result};
use crate::exact::{rat_from, rat_int, rat_to_f64, ExactComplex, Rat};
use crate::linalg::stationary_vector;
use crate::observable::Observable;

#[derive(Clone, Debug)]
enum MeasureKind {
    /// Shift measure determined by a depth-k weight; `base` holds the
    /// anchor masses on depth-(k−1) words (the empty word when k = 1).
    SftWeighted {
        v_depth: usize,
        weight: BTreeMap<Vec<usize>, Rat>,
        base: BTreeMap<Vec<usize>, Rat>,
    },
    Haar,
}

#[derive(Clone, Debug)]
pub struct InvariantMeasure {
    pub sys: DynamicalSystem,
    kind: MeasureKind,
}

/// Extract a real, nonnegative rational table from a cylinder observable.
fn rational_weight_table(obs: &Observable) -> Result<(usize, BTreeMap<Vec<usize>, Rat>)> {
    match obs {
        Observable::Cylinder { depth, table } => {
            let mut out = BTreeMap::new();
            for (w, v) in table {
                if !v.im.is_zero() {
                    return Err(EndoError::InvalidMeasure("weight must be real".into()));
                }
                let r = v.re.as_rat().ok_or_else(|| {
                    EndoError::InvalidMeasure("weight values must be rational".into())
                })?;
                if r < Rat::zero() {
                    return Err(EndoError::InvalidMeasure("weight values must be ≥ 0".into()));
                }
                out.insert(w.clone(), r);
            }
            Ok((*depth, out))
        }
        Observable::Trig { .. } => Err(EndoError::Unsupported(
            "only cylinder-type transition weights are supported".into(),
        )),
    }
}

/// The uniform weight V(y) = 1 / #r⁻¹(r(y)) as a depth-2 table.
fn uniform_weight(sys: &SftSystem) -> BTreeMap<Vec<usize>, Rat> {
    sys.admissible_words(2)
        .into_iter()
        .map(|w| {
            let n = sys.col_sum(w[1]) as i64;
            (w, rat_from(1, n))
        })
        .collect()
}

fn build_sft_measure(
    sys: &SftSystem,
    v_depth: usize,
    weight: BTreeMap<Vec<usize>, Rat>,
) -> Result<MeasureKind> {
    // normalization: for every point x, Σ_{r(y)=x} V(y) = 1; V(y) only
    // depends on the first v_depth letters of y, so it suffices to range
    // over depth-(v_depth−1) words (depth 1 when v_depth = 1).
    let probe_depth = (v_depth - 1).max(1);
    for u in sys.admissible_words(probe_depth) {
        let mut total = Rat::zero();
        for a in 0..sys.alphabet.size() {
            if sys.admissible(a, u[0]) {
                let mut y = vec![a];
                y.extend_from_slice(&u);
                y.truncate(v_depth);
                total += weight[&y].clone();
            }
        }
        if !total.is_one() {
            return Err(EndoError::InvalidMeasure(format!(
                "fiber sums of the weight must equal 1; word {:?} gives {}",
                u, total
            )));
        }
    }

    let base = if v_depth == 1 {
        let mut b = BTreeMap::new();
        b.insert(Vec::new(), Rat::one());
        b
    } else {
        // ν([u]) = Σ_a V(u·a) ν([u₁…·a]) on depth-(k−1) words
        let words = sys.admissible_words(v_depth - 1);
        let idx: BTreeMap<&Vec<usize>, usize> =
            words.iter().enumerate().map(|(i, w)| (w, i)).collect();
        let n = words.len();
        let mut m = vec![vec![Rat::zero(); n]; n];
        for (i, u) in words.iter().enumerate() {
            let last = *u.last().unwrap();
            for a in 0..sys.alphabet.size() {
                if sys.admissible(last, a) {
                    let mut ua = u.clone();
                    ua.push(a);
                    let shifted = ua[1..].to_vec();
                    let j = idx[&shifted];
                    m[i][j] += weight[&ua].clone();
                }
            }
        }
        let nu = stationary_vector(&m).map_err(|e| {
            EndoError::InvalidMeasure(format!("weight eigenproblem failed: {}", e))
        })?;
        if nu.iter().any(|x| x < &Rat::zero()) {
            return Err(EndoError::InvalidMeasure(
                "stationary vector has negative entries".into(),
            ));
        }
        words.into_iter().zip(nu).collect()
    };
    Ok(MeasureKind::SftWeighted { v_depth, weight, base })
}

/// The strongly invariant measure for the given transition weight. `None`
/// selects the uniform weight 1/#r⁻¹(r(y)); for circle maps this is Haar
/// measure and non-uniform weights are not supported.
pub fn invariant_measure(
    sys: &DynamicalSystem,
    weight: Option<&Observable>,
) -> Result<InvariantMeasure> {
    let kind = match (sys, weight) {
        (DynamicalSystem::Sft(s), None) => build_sft_measure(s, 2, uniform_weight(s))?,
        (DynamicalSystem::Sft(s), Some(obs)) => {
            let (depth, table) = rational_weight_table(obs)?;
            build_sft_measure(s, depth, table)?
        }
        (DynamicalSystem::Torus(_), None) => MeasureKind::Haar,
        (DynamicalSystem::Torus(t), Some(obs)) => {
            // only the uniform weight (constant 1/N) reproduces Haar; other
            // weights on the circle are out of scope
            let uniform = Observable::constant(
                sys,
                ExactComplex::from_rat(rat_from(1, t.degree as i64)),
            );
            match obs.sub(sys, &uniform) {
                Ok(d) if d.is_zero() => MeasureKind::Haar,
                _ => {
                    return Err(EndoError::Unsupported(
                        "non-uniform transition weights on the circle are not supported".into(),
                    ))
                }
            }
        }
    };
    Ok(InvariantMeasure { sys: sys.clone(), kind })
}

impl InvariantMeasure {
    pub fn is_haar(&self) -> bool {
        matches!(self.kind, MeasureKind::Haar)
    }

    pub fn weight_depth(&self) -> usize {
        match &self.kind {
            MeasureKind::SftWeighted { v_depth, .. } => *v_depth,
            MeasureKind::Haar => 1,
        }
    }

    /// Weight value V(y) for a point with the given leading letters.
    pub fn weight_at(&self, w: &[usize]) -> Rat {
        match &self.kind {
            MeasureKind::SftWeighted { v_depth, weight, .. } => {
                weight[&w[..*v_depth].to_vec()].clone()
            }
            MeasureKind::Haar => match &self.sys {
                DynamicalSystem::Torus(t) => rat_from(1, t.degree as i64),
                _ => unreachable!(),
            },
        }
    }

    /// ρ([w]): mass of the cylinder of points starting with w (shift
    /// systems) or of the base-N digit interval w (circle maps). The empty
    /// word denotes the whole space.
    pub fn cylinder_mass(&self, w: &[usize]) -> Rat {
        match (&self.kind, &self.sys) {
            (MeasureKind::Haar, DynamicalSystem::Torus(t)) => {
                let n = BigInt::from(t.degree);
                Rat::new(BigInt::one(), n.pow(w.len() as u32))
            }
            (MeasureKind::SftWeighted { v_depth, weight, base }, DynamicalSystem::Sft(s)) => {
                if !s.word_admissible(w) {
                    return Rat::zero();
                }
                let anchor = v_depth - 1;
                if w.len() < anchor {
                    // sum over extensions to the anchor depth
                    let mut total = Rat::zero();
                    let last = w.last().copied();
                    for b in 0..s.alphabet.size() {
                        if last.map_or(true, |l| s.admissible(l, b)) {
                            let mut wb = w.to_vec();
                            wb.push(b);
                            total += self.cylinder_mass(&wb);
                        }
                    }
                    total
                } else if w.len() == anchor {
                    base[&w.to_vec()].clone()
                } else {
                    let head = w[..*v_depth.min(&w.len())].to_vec();
                    weight[&head].clone() * self.cylinder_mass(&w[1..])
                }
            }
            _ => unreachable!(),
        }
    }

    /// ∫ f dρ, exact. Trigonometric polynomials integrate against Haar to
    /// their constant coefficient.
    pub fn integrate(&self, f: &Observable) -> Result<ExactComplex> {
        match (f, &self.kind) {
            (Observable::Cylinder { table, .. }, MeasureKind::SftWeighted { .. }) => {
                let mut acc = ExactComplex::zero();
                for (w, v) in table {
                    acc = acc.add(&v.scale(&self.cylinder_mass(w)));
                }
                Ok(acc)
            }
            (Observable::Trig { coeffs }, MeasureKind::Haar) => {
                Ok(coeffs.get(&0).cloned().unwrap_or_else(ExactComplex::zero))
            }
            (Observable::Cylinder { table, depth }, MeasureKind::Haar) => {
                // digit cylinders on the circle: all N^depth words
                let mut acc = ExactComplex::zero();
                let mass = self.cylinder_mass(&vec![0; *depth]);
                for v in table.values() {
                    acc = acc.add(&v.scale(&mass));
                }
                Ok(acc)
            }
            _ => Err(EndoError::InvalidMeasure(
                "observable kind does not match the measure".into(),
            )),
        }
    }

    /// Largest additivity defect |ρ([w]) − Σ_b ρ([w·b])| over admissible
    /// words up to the given depth. Exact; a correct construction gives
    /// zero, so this is the internal consistency diagnostic.
    pub fn strong_invariance_residual(&self, depth: usize) -> Rat {
        match (&self.kind, &self.sys) {
            (MeasureKind::Haar, _) => Rat::zero(),
            (MeasureKind::SftWeighted { .. }, DynamicalSystem::Sft(s)) => {
                let mut worst = Rat::zero();
                for d in 1..=depth {
                    for w in s.admissible_words(d) {
                        let mut total = Rat::zero();
                        for b in 0..s.alphabet.size() {
                            if s.admissible(*w.last().unwrap(), b) {
                                let mut wb = w.clone();
                                wb.push(b);
                                total += self.cylinder_mass(&wb);
                            }
                        }
                        let defect = self.cylinder_mass(&w) - total;
                        let defect = if defect < Rat::zero() { -defect } else { defect };
                        if defect > worst {
                            worst = defect;
                        }
                    }
                }
                worst
            }
            _ => unreachable!(),
        }
    }

    /// Draw points distributed by ρ, exact and reproducible for a seeded
    /// generator. Shift samples carry an eventually periodic tail beyond
    /// the sampled depth; circle samples are rationals u/N^depth.
    pub fn sample_points<R: Rng>(&self, rng: &mut R, count: usize, depth: usize) -> Vec<Point> {
        (0..count).map(|_| self.sample_point(rng, depth)).collect()
    }

    pub fn sample_point<R: Rng>(&self, rng: &mut R, depth: usize) -> Point {
        match &self.sys {
            DynamicalSystem::Torus(t) => {
                let n = BigInt::from(t.degree).pow(depth as u32);
                // sample the numerator uniformly via a f64 draw scaled up
                let num: u64 = rng.gen_range(0..u64::MAX);
                let num = BigInt::from(num) * &n / BigInt::from(u64::MAX - 1);
                Point::angle(Rat::new(num.min(&n - 1), n))
            }
            DynamicalSystem::Sft(s) => {
                let mut w: Vec<usize> = Vec::new();
                for _ in 0..depth.max(1) {
                    let mass_w = self.cylinder_mass(&w);
                    let mut u = rng.gen_range(0.0..1.0) * rat_to_f64(&mass_w);
                    let mut chosen = None;
                    for b in 0..s.alphabet.size() {
                        let mut wb = w.clone();
                        wb.push(b);
                        let m = rat_to_f64(&self.cylinder_mass(&wb));
                        if m == 0.0 {
                            continue;
                        }
                        if u < m {
                            chosen = Some(b);
                            break;
                        }
                        u -= m;
                        chosen = Some(b); // fall through to the last branch
                    }
                    w.push(chosen.expect("some extension has positive mass"));
                }
                // close the word into an eventually periodic point by
                // greedily following least admissible letters to a cycle
                let mut tail = vec![*w.last().unwrap()];
                loop {
                    let last = *tail.last().unwrap();
                    let next = (0..s.alphabet.size())
                        .find(|&b| s.admissible(last, b))
                        .unwrap();
                    if let Some(pos) = tail.iter().position(|&l| l == next) {
                        // letters: w[..n−1] ++ tail[..pos] ++ (tail[pos..] forever),
                        // since tail[0] duplicates the last letter of w
                        let period = tail[pos..].to_vec();
                        let mut prefix = w[..w.len() - 1].to_vec();
                        prefix.extend_from_slice(&tail[..pos]);
                        return Point::word(s, &prefix, &period).unwrap();
                    }
                    tail.push(next);
                }
            }
        }
    }

    /// Depth-1 marginals π(b) = ρ([b]) (shift systems).
    pub fn letter_marginals(&self) -> Vec<Rat> {
        match &self.sys {
            DynamicalSystem::Sft(s) => (0..s.alphabet.size())
                .map(|b| self.cylinder_mass(&[b]))
                .collect(),
            DynamicalSystem::Torus(t) => {
                vec![rat_int(1) / rat_int(t.degree as i64); t.degree as usize]
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endo::TorusSystem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gm() -> DynamicalSystem {
        DynamicalSystem::Sft(SftSystem::golden_mean())
    }

    #[test]
    fn golden_mean_uniform_marginals() {
        let rho = invariant_measure(&gm(), None).unwrap();
        assert_eq!(rho.letter_marginals(), vec![rat_from(2, 3), rat_from(1, 3)]);
        // all three admissible 2-cylinders carry mass 1/3
        for w in [[0usize, 0], [0, 1], [1, 0]] {
            assert_eq!(rho.cylinder_mass(&w), rat_from(1, 3));
        }
        assert_eq!(rho.cylinder_mass(&[1, 1]), Rat::zero());
        // ρ([112]) = V(11)·ρ([12]) = 1/2 · 1/3
        assert_eq!(rho.cylinder_mass(&[0, 0, 1]), rat_from(1, 6));
    }

    #[test]
    fn golden_mean_additivity_is_exact() {
        let rho = invariant_measure(&gm(), None).unwrap();
        assert_eq!(rho.strong_invariance_residual(6), Rat::zero());
    }

    #[test]
    fn nonuniform_weight_eigenproblem() {
        // V(11)=3/4, V(21)=1/4, V(12)=1: fibers sum to 1
        let s = SftSystem::golden_mean();
        let mut table = BTreeMap::new();
        table.insert(vec![0, 0], ExactComplex::from_rat(rat_from(3, 4)));
        table.insert(vec![0, 1], ExactComplex::one());
        table.insert(vec![1, 0], ExactComplex::from_rat(rat_from(1, 4)));
        let v = Observable::cylinder(&s, 2, table).unwrap();
        let rho = invariant_measure(&gm(), Some(&v)).unwrap();
        assert_eq!(rho.letter_marginals(), vec![rat_from(4, 5), rat_from(1, 5)]);
        assert_eq!(rho.strong_invariance_residual(5), Rat::zero());
        // ρ([21]) = V(21)·ρ([1]) = 1/4 · 4/5
        assert_eq!(rho.cylinder_mass(&[1, 0]), rat_from(1, 5));
    }

    #[test]
    fn bad_weights_rejected() {
        let s = SftSystem::golden_mean();
        let mut table = BTreeMap::new();
        table.insert(vec![0, 0], ExactComplex::from_rat(rat_from(1, 2)));
        table.insert(vec![0, 1], ExactComplex::from_rat(rat_from(1, 2)));
        table.insert(vec![1, 0], ExactComplex::from_rat(rat_from(1, 4)));
        let v = Observable::cylinder(&s, 2, table).unwrap();
        assert!(invariant_measure(&gm(), Some(&v)).is_err());
    }

    #[test]
    fn haar_masses_and_integration() {
        let sys = DynamicalSystem::Torus(TorusSystem::new(2).unwrap());
        let rho = invariant_measure(&sys, None).unwrap();
        assert_eq!(rho.cylinder_mass(&[0, 1, 1]), rat_from(1, 8));
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, ExactComplex::from_int(3));
        coeffs.insert(5, ExactComplex::one());
        let f = Observable::trig(coeffs);
        assert_eq!(rho.integrate(&f).unwrap(), ExactComplex::from_int(3));
    }

    #[test]
    fn torus_nonuniform_weight_unsupported() {
        let sys = DynamicalSystem::Torus(TorusSystem::new(2).unwrap());
        let mut coeffs = BTreeMap::new();
        coeffs.insert(0, ExactComplex::from_rat(rat_from(1, 2)));
        coeffs.insert(1, ExactComplex::from_rat(rat_from(1, 4)));
        let v = Observable::trig(coeffs);
        assert!(matches!(
            invariant_measure(&sys, Some(&v)),
            Err(EndoError::Unsupported(_))
        ));
        // the uniform constant weight is accepted and yields Haar
        let u = Observable::constant(&sys, ExactComplex::from_rat(rat_from(1, 2)));
        assert!(invariant_measure(&sys, Some(&u)).unwrap().is_haar());
    }

    #[test]
    fn integrate_cylinder_exactly() {
        let rho = invariant_measure(&gm(), None).unwrap();
        let s = SftSystem::golden_mean();
        let chi = Observable::indicator(&s, &[1, 0]).unwrap();
        assert_eq!(rho.integrate(&chi).unwrap(), ExactComplex::from_rat(rat_from(1, 3)));
    }

    #[test]
    fn sampling_is_reproducible_and_on_support() {
        let rho = invariant_measure(&gm(), None).unwrap();
        let s = SftSystem::golden_mean();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = rho.sample_points(&mut rng, 50, 6);
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let pts2 = rho.sample_points(&mut rng2, 50, 6);
        assert_eq!(pts, pts2);
        for p in &pts {
            assert!(s.word_admissible(&p.letters(12)));
        }
        // empirical frequency of first letter 1 should be near 2/3
        let ones = pts.iter().filter(|p| p.letter_at(0) == 0).count();
        assert!(ones > 20 && ones < 45);
    }

    #[test]
    fn torus_sampling_reproducible() {
        let sys = DynamicalSystem::Torus(TorusSystem::new(2).unwrap());
        let rho = invariant_measure(&sys, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = rho.sample_points(&mut rng, 20, 10);
        for p in &pts {
            let a = p.as_angle().unwrap();
            assert!(a >= &Rat::zero() && a < &Rat::one());
        }
    }
}
