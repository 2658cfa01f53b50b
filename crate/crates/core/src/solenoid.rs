//! Backward-orbit path spaces over a repelling cycle: exact encodings of
//! the countable fiber N_C(x), pattern-based path functionals with the
//! measure λ_C, the covariant operators U and π, cross-section
//! canonicalization and the associated isometry diagnostics.
//!
//! A path ω = (z_0, z_1, …) with r(z_{l+1}) = z_l that converges backward
//! to the cycle is determined exactly by its base point z_0, a finite list
//! of branch labels j_1…j_m (nearest the base first), and an alignment
//! index i ∈ ℤ_p recording which cycle point the deep tail approaches:
//! z_l → x_{(i+l) mod p}. Beyond the prefix the labels are forced by the
//! cycle. The encoding is canonical when the last explicit label differs
//! from the forced one.

use num::{One, Zero};

use crate::endo::{
    apply, circle_dist, label_of, prepend, Cycle, DynamicalSystem, Point,
};
use crate::error::{EndoError, Result};
use crate::exact::{rat_from, rat_int, ExactComplex, RadicalSum, Rat};
use crate::measure::InvariantMeasure;
use crate::observable::Observable;

/// One backward path in N_C(x), exactly encoded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SolenoidPath {
    pub base: Point,
    pub labels: Vec<usize>,
    pub align: usize,
}

fn canonicalize_labels(sys: &DynamicalSystem, cycle: &Cycle, labels: &mut Vec<usize>, align: usize) {
    while let Some(&last) = labels.last() {
        if last == cycle.tail_label(sys, align, labels.len() as i64 - 1) {
            labels.pop();
        } else {
            break;
        }
    }
}

impl SolenoidPath {
    pub fn new(
        sys: &DynamicalSystem,
        cycle: &Cycle,
        base: Point,
        labels: Vec<usize>,
        align: usize,
    ) -> Result<SolenoidPath> {
        let mut labels = labels;
        let align = align % cycle.len();
        // every explicit prepend must be admissible…
        let mut z = base.clone();
        for &j in &labels {
            z = prepend(sys, &z, j)?;
        }
        // …and so must the first forced tail step
        let tail = cycle.tail_label(sys, align, labels.len() as i64);
        prepend(sys, &z, tail)?;
        canonicalize_labels(sys, cycle, &mut labels, align);
        Ok(SolenoidPath { base, labels, align })
    }

    /// The special path that runs along the cycle itself, based at x_i.
    pub fn pure_cycle(sys: &DynamicalSystem, cycle: &Cycle, i: usize) -> SolenoidPath {
        let _ = sys;
        SolenoidPath {
            base: cycle.point(i).clone(),
            labels: Vec::new(),
            align: i % cycle.len(),
        }
    }

    pub fn is_pure_cycle(&self, cycle: &Cycle) -> bool {
        self.labels.is_empty() && &self.base == cycle.point(self.align)
    }

    /// Branch label of the step z_{l} → z_{l+1} (explicit or forced).
    pub fn label_at(&self, sys: &DynamicalSystem, cycle: &Cycle, l: usize) -> usize {
        if l < self.labels.len() {
            self.labels[l]
        } else {
            cycle.tail_label(sys, self.align, l as i64)
        }
    }

    /// z_l for l ≥ 0 (backward points) or the forward image r^{−l}(z_0)
    /// for l < 0.
    pub fn point_at(&self, sys: &DynamicalSystem, cycle: &Cycle, l: i64) -> Result<Point> {
        if l >= 0 {
            let mut z = self.base.clone();
            for t in 0..l as usize {
                z = prepend(sys, &z, self.label_at(sys, cycle, t))?;
            }
            Ok(z)
        } else {
            let mut z = self.base.clone();
            for _ in 0..(-l) as usize {
                z = apply(sys, &z)?;
            }
            Ok(z)
        }
    }

    /// r̂: apply r to every entry; the base's own label joins the prefix
    /// and the alignment drops by one.
    pub fn rhat(&self, sys: &DynamicalSystem, cycle: &Cycle) -> Result<SolenoidPath> {
        let p = cycle.len();
        let mut labels = Vec::with_capacity(self.labels.len() + 1);
        labels.push(label_of(sys, &self.base));
        labels.extend_from_slice(&self.labels);
        SolenoidPath::new(
            sys,
            cycle,
            apply(sys, &self.base)?,
            labels,
            (self.align + p - 1) % p,
        )
    }

    /// r̂⁻¹: move one step down the path; the alignment grows by one.
    pub fn rhat_inv(&self, sys: &DynamicalSystem, cycle: &Cycle) -> Result<SolenoidPath> {
        let j = self.label_at(sys, cycle, 0);
        let labels = if self.labels.is_empty() {
            Vec::new()
        } else {
            self.labels[1..].to_vec()
        };
        SolenoidPath::new(
            sys,
            cycle,
            prepend(sys, &self.base, j)?,
            labels,
            (self.align + 1) % cycle.len(),
        )
    }

    pub fn rhat_pow(&self, sys: &DynamicalSystem, cycle: &Cycle, k: i64) -> Result<SolenoidPath> {
        let mut w = self.clone();
        for _ in 0..k.unsigned_abs() {
            w = if k >= 0 { w.rhat(sys, cycle)? } else { w.rhat_inv(sys, cycle)? };
        }
        Ok(w)
    }
}

/// All paths in N_C(x) with canonical prefix length ≤ m_max, ordered by
/// prefix length then lexicographically (alignment outermost).
pub fn enumerate_paths(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    x: &Point,
    m_max: usize,
) -> Result<Vec<SolenoidPath>> {
    let p = cycle.len();
    let mut out = Vec::new();
    for m in 0..=m_max {
        for align in 0..p {
            // DFS over admissible label words of length m
            let mut stack: Vec<(Vec<usize>, Point)> = vec![(Vec::new(), x.clone())];
            for _ in 0..m {
                let mut next = Vec::new();
                for (labels, z) in stack {
                    for j in 0..sys.label_count() {
                        if let Ok(z2) = prepend(sys, &z, j) {
                            let mut l2 = labels.clone();
                            l2.push(j);
                            next.push((l2, z2));
                        }
                    }
                }
                stack = next;
            }
            for (labels, z) in stack {
                // canonical: the last explicit label must differ from the
                // forced continuation
                if let Some(&last) = labels.last() {
                    if last == cycle.tail_label(sys, align, m as i64 - 1) {
                        continue;
                    }
                }
                // the forced tail must attach admissibly
                let tail = cycle.tail_label(sys, align, m as i64);
                if prepend(sys, &z, tail).is_err() {
                    continue;
                }
                out.push(SolenoidPath { base: x.clone(), labels, align });
            }
        }
    }
    Ok(out)
}

/// Product of weights ∏_k W(z_k) along the backward word z_1…z_n obtained
/// by prepending the given labels to x: the P_x-measure of the cylinder of
/// paths starting with those branch choices.
pub fn path_cylinder_measure(
    sys: &DynamicalSystem,
    w: &Observable,
    x: &Point,
    labels: &[usize],
) -> Result<f64> {
    let mut z = x.clone();
    let mut acc = 1.0;
    for &j in labels {
        z = prepend(sys, &z, j)?;
        let v = match w.eval(&z) {
            Ok(v) => {
                if !v.im.is_zero() {
                    return Err(EndoError::InvalidFilter("weight must be real".into()));
                }
                v.re.to_f64()
            }
            Err(EndoError::Unsupported(_)) => w.eval_f64(&z)?.0,
            Err(e) => return Err(e),
        };
        acc *= v;
    }
    Ok(acc)
}

/// A set of paths cut out by a fixed canonical prefix, an alignment, and a
/// cylinder constraint on the base point (letters for shifts, base-N
/// digits for circle maps).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathPattern {
    pub labels: Vec<usize>,
    pub align: usize,
    pub base_word: Vec<usize>,
}

fn word_admissible(sys: &DynamicalSystem, w: &[usize]) -> bool {
    match sys {
        DynamicalSystem::Sft(s) => {
            !w.is_empty() && w.iter().all(|&l| l < s.alphabet.size()) && s.word_admissible(w)
        }
        DynamicalSystem::Torus(t) => {
            !w.is_empty() && w.iter().all(|&d| d < t.degree as usize)
        }
    }
}

fn step_admissible(sys: &DynamicalSystem, upper: usize, lower: usize) -> bool {
    match sys {
        DynamicalSystem::Sft(s) => s.admissible(upper, lower),
        DynamicalSystem::Torus(_) => true,
    }
}

/// #r⁻¹ of any point whose word starts with the given letter.
fn fiber_of_letter(sys: &DynamicalSystem, letter: usize) -> usize {
    match sys {
        DynamicalSystem::Sft(s) => s.col_sum(letter),
        DynamicalSystem::Torus(t) => t.degree as usize,
    }
}

impl PathPattern {
    pub fn new(
        sys: &DynamicalSystem,
        cycle: &Cycle,
        labels: Vec<usize>,
        align: usize,
        base_word: Vec<usize>,
    ) -> Result<PathPattern> {
        let align = align % cycle.len();
        if !word_admissible(sys, &base_word) {
            return Err(EndoError::Inadmissible("pattern base word not admissible".into()));
        }
        // the prepend chain j_1 onto the base, j_2 onto j_1, …
        let mut below = base_word[0];
        for &j in &labels {
            if !step_admissible(sys, j, below) {
                return Err(EndoError::Inadmissible("pattern label chain not admissible".into()));
            }
            below = j;
        }
        let tail = cycle.tail_label(sys, align, labels.len() as i64);
        if !step_admissible(sys, tail, below) {
            return Err(EndoError::Inadmissible("forced tail not admissible".into()));
        }
        let mut labels = labels;
        canonicalize_labels(sys, cycle, &mut labels, align);
        Ok(PathPattern { labels, align, base_word })
    }

    pub fn label_at(&self, sys: &DynamicalSystem, cycle: &Cycle, l: usize) -> usize {
        if l < self.labels.len() {
            self.labels[l]
        } else {
            cycle.tail_label(sys, self.align, l as i64)
        }
    }

    /// Does a concrete path lie in this pattern's set?
    pub fn matches(&self, sys: &DynamicalSystem, path: &SolenoidPath) -> bool {
        if self.labels != path.labels || self.align != path.align {
            return false;
        }
        match (&path.base, sys) {
            (p @ Point::Word { .. }, DynamicalSystem::Sft(_)) => {
                p.letters(self.base_word.len()) == self.base_word
            }
            (Point::Angle(a), DynamicalSystem::Torus(t)) => {
                digits_of(a, t.degree, self.base_word.len()) == self.base_word
            }
            _ => false,
        }
    }

    /// Split the base constraint into all one-step-deeper cylinders.
    pub fn refine_once(&self, sys: &DynamicalSystem) -> Vec<PathPattern> {
        let n = sys.label_count();
        (0..n)
            .filter_map(|b| {
                let mut w = self.base_word.clone();
                if let DynamicalSystem::Sft(s) = sys {
                    if !s.admissible(*w.last().unwrap(), b) {
                        return None;
                    }
                }
                w.push(b);
                Some(PathPattern { labels: self.labels.clone(), align: self.align, base_word: w })
            })
            .collect()
    }

    pub fn refine_to_depth(&self, sys: &DynamicalSystem, depth: usize) -> Vec<PathPattern> {
        let mut out = vec![self.clone()];
        while out[0].base_word.len() < depth {
            out = out.iter().flat_map(|p| p.refine_once(sys)).collect();
        }
        out
    }
}

/// Base-N digits d_1…d_k of an angle.
pub fn digits_of(a: &Rat, degree: u32, k: usize) -> Vec<usize> {
    let n = rat_int(degree as i64);
    let mut x = a.clone();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        x *= n.clone();
        let d = x.floor();
        out.push(num::ToPrimitive::to_usize(&d.to_integer()).unwrap());
        x -= d;
    }
    out
}

/// Finitely supported functional on the path space: a linear combination
/// of pattern indicators.
#[derive(Clone, Debug, Default)]
pub struct PathFunctional {
    pub terms: Vec<(PathPattern, ExactComplex)>,
}

/// How a pattern shift scales the coefficient.
enum ShiftWeight<'a> {
    /// α_{i} √𝔠 — the unitary U (or its inverse)
    Unitary(&'a [ExactComplex]),
    /// 𝔠 itself — the multiplier in the λ_C invariance identity
    FiberCount,
    /// plain composition with r̂
    Plain,
}

impl PathFunctional {
    pub fn zero() -> PathFunctional {
        PathFunctional { terms: Vec::new() }
    }

    pub fn unit(pattern: PathPattern) -> PathFunctional {
        PathFunctional { terms: vec![(pattern, ExactComplex::one())] }
    }

    pub fn from_terms(terms: Vec<(PathPattern, ExactComplex)>) -> PathFunctional {
        PathFunctional { terms }
    }

    pub fn add(&self, other: &PathFunctional) -> PathFunctional {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        PathFunctional { terms }
    }

    pub fn scale(&self, c: &ExactComplex) -> PathFunctional {
        PathFunctional {
            terms: self.terms.iter().map(|(p, v)| (p.clone(), v.mul(c))).collect(),
        }
    }

    pub fn sub(&self, other: &PathFunctional) -> PathFunctional {
        self.add(&other.scale(&ExactComplex::from_int(-1)))
    }

    pub fn eval(&self, sys: &DynamicalSystem, path: &SolenoidPath) -> ExactComplex {
        let mut acc = ExactComplex::zero();
        for (p, c) in &self.terms {
            if p.matches(sys, path) {
                acc = acc.add(c);
            }
        }
        acc
    }

    /// Rewrite with pairwise-disjoint patterns: within each (labels,
    /// alignment) group, refine all base words to the common depth and
    /// merge duplicates.
    pub fn consolidate(&self, sys: &DynamicalSystem) -> PathFunctional {
        PathFunctional { terms: self.consolidate_patterns(sys) }
    }

    /// ∫ F dλ_C: each admissible pattern contributes exactly one path per
    /// base point, so the integral is Σ c · ρ(base cylinder).
    pub fn integrate(&self, rho: &InvariantMeasure) -> ExactComplex {
        let mut acc = ExactComplex::zero();
        for (p, c) in &self.terms {
            acc = acc.add(&c.scale(&rho.cylinder_mass(&p.base_word)));
        }
        acc
    }

    /// ⟨F, G⟩ in L²(λ_C): patterns with different (labels, alignment) are
    /// disjoint; equal ones overlap on the deeper of two nested cylinders.
    pub fn inner_product(&self, rho: &InvariantMeasure, other: &PathFunctional) -> ExactComplex {
        let mut acc = ExactComplex::zero();
        for (pa, ca) in &self.terms {
            for (pb, cb) in &other.terms {
                if pa.labels != pb.labels || pa.align != pb.align {
                    continue;
                }
                let (short, long) = if pa.base_word.len() <= pb.base_word.len() {
                    (&pa.base_word, &pb.base_word)
                } else {
                    (&pb.base_word, &pa.base_word)
                };
                if long[..short.len()] == short[..] {
                    acc = acc.add(&ca.mul(&cb.conj()).scale(&rho.cylinder_mass(long)));
                }
            }
        }
        acc
    }

    pub fn norm_sqr(&self, rho: &InvariantMeasure) -> RadicalSum {
        self.inner_product(rho, self).re
    }

    /// F ↦ weighted F∘r̂ on the pattern level. A pattern (π, a, w) pulled
    /// back through r̂ becomes (π₂…π_m, a+1, j·w) with j the first explicit
    /// or forced label.
    fn shift_forward(
        &self,
        sys: &DynamicalSystem,
        cycle: &Cycle,
        weight: ShiftWeight,
    ) -> Result<PathFunctional> {
        let p = cycle.len();
        let mut terms = Vec::new();
        for (pat, c) in &self.terms {
            let j = pat.label_at(sys, cycle, 0);
            if !step_admissible(sys, j, pat.base_word[0]) {
                continue; // no point of the shifted pattern exists
            }
            let fiber = fiber_of_letter(sys, pat.base_word[0]);
            let labels = if pat.labels.is_empty() {
                Vec::new()
            } else {
                pat.labels[1..].to_vec()
            };
            let mut base_word = Vec::with_capacity(pat.base_word.len() + 1);
            base_word.push(j);
            base_word.extend_from_slice(&pat.base_word);
            let align = (pat.align + 1) % p;
            let coeff = match &weight {
                ShiftWeight::Unitary(phases) => c
                    .mul(&phases[align % phases.len()])
                    .mul_radical(&RadicalSum::sqrt_int(fiber as u64)),
                ShiftWeight::FiberCount => c.scale(&rat_int(fiber as i64)),
                ShiftWeight::Plain => c.clone(),
            };
            terms.push((PathPattern::new(sys, cycle, labels, align, base_word)?, coeff));
        }
        Ok(PathFunctional { terms })
    }

    /// The inverse pattern shift: refine the base to depth ≥ 2, then
    /// (π, a, w) becomes (w₀·π, a−1, σw).
    fn shift_backward(
        &self,
        sys: &DynamicalSystem,
        cycle: &Cycle,
        weight: ShiftWeight,
    ) -> Result<PathFunctional> {
        let p = cycle.len();
        let mut terms = Vec::new();
        for (pat, c) in &self.terms {
            for q in pat.refine_to_depth(sys, pat.base_word.len().max(2)) {
                let fiber = fiber_of_letter(sys, q.base_word[1]);
                let mut labels = Vec::with_capacity(q.labels.len() + 1);
                labels.push(q.base_word[0]);
                labels.extend_from_slice(&q.labels);
                let base_word = q.base_word[1..].to_vec();
                let align = (q.align + p - 1) % p;
                let coeff = match &weight {
                    ShiftWeight::Unitary(phases) => {
                        let alpha = &phases[q.align % phases.len()];
                        c.mul(&alpha.conj())
                            .mul_radical(&RadicalSum::sqrt_rat(&rat_from(1, fiber as i64)))
                    }
                    ShiftWeight::FiberCount => c.scale(&rat_from(1, fiber as i64)),
                    ShiftWeight::Plain => c.clone(),
                };
                terms.push((PathPattern::new(sys, cycle, labels, align, base_word)?, coeff));
            }
        }
        Ok(PathFunctional { terms })
    }

    /// (UF)(x, ω) = α_{i(ω)} √𝔠(x) F(r̂(x, ω)).
    pub fn apply_u(
        &self,
        sys: &DynamicalSystem,
        cycle: &Cycle,
        phases: &[ExactComplex],
    ) -> Result<PathFunctional> {
        self.shift_forward(sys, cycle, ShiftWeight::Unitary(phases))
    }

    pub fn apply_u_inverse(
        &self,
        sys: &DynamicalSystem,
        cycle: &Cycle,
        phases: &[ExactComplex],
    ) -> Result<PathFunctional> {
        self.shift_backward(sys, cycle, ShiftWeight::Unitary(phases))
    }

    /// 𝔠^{(n)} · F∘r̂^n as a pattern functional (n of either sign); its
    /// λ_C-integral equals ∫ F dλ_C.
    pub fn weighted_pullback(
        &self,
        sys: &DynamicalSystem,
        cycle: &Cycle,
        n: i64,
    ) -> Result<PathFunctional> {
        let mut f = self.clone();
        for _ in 0..n.unsigned_abs() {
            f = if n >= 0 {
                f.shift_forward(sys, cycle, ShiftWeight::FiberCount)?
            } else {
                f.shift_backward(sys, cycle, ShiftWeight::FiberCount)?
            };
        }
        Ok(f)
    }

    /// F∘r̂^n without weights.
    pub fn pullback(
        &self,
        sys: &DynamicalSystem,
        cycle: &Cycle,
        n: i64,
    ) -> Result<PathFunctional> {
        let mut f = self.clone();
        for _ in 0..n.unsigned_abs() {
            f = if n >= 0 {
                f.shift_forward(sys, cycle, ShiftWeight::Plain)?
            } else {
                f.shift_backward(sys, cycle, ShiftWeight::Plain)?
            };
        }
        Ok(f)
    }

    /// π(f)F: multiply by f(base). The base cylinders are refined to the
    /// depth of f; on circle systems only cylinder (digit) observables and
    /// constants are supported.
    pub fn apply_pi(&self, sys: &DynamicalSystem, f: &Observable) -> Result<PathFunctional> {
        match f {
            Observable::Cylinder { depth, table } => {
                let mut terms = Vec::new();
                for (pat, c) in &self.terms {
                    for q in pat.refine_to_depth(sys, pat.base_word.len().max(*depth)) {
                        let key = q.base_word[..*depth].to_vec();
                        let v = table.get(&key).cloned().unwrap_or_else(ExactComplex::zero);
                        let coeff = c.mul(&v);
                        if !coeff.is_zero() {
                            terms.push((q, coeff));
                        }
                    }
                }
                Ok(PathFunctional { terms })
            }
            Observable::Trig { coeffs } => {
                if coeffs.is_empty() {
                    return Ok(PathFunctional::zero());
                }
                if coeffs.len() == 1 {
                    if let Some(c0) = coeffs.get(&0) {
                        return Ok(self.scale(c0));
                    }
                }
                Err(EndoError::Unsupported(
                    "multiplication by non-constant trig observables on path functionals \
                     is not supported; use digit-cylinder observables"
                        .into(),
                ))
            }
        }
    }
}

/// Cross-section geometry: a cylinder depth d around x_0 for shifts, or a
/// rational radius δ for circle maps.
#[derive(Clone, Debug)]
pub enum CrossSection {
    Cylinder(usize),
    Interval(Rat),
}

impl CrossSection {
    /// Default neighborhood: two cycle periods of letters, or radius
    /// 1/(2N^p) on the circle.
    pub fn default_for(sys: &DynamicalSystem, cycle: &Cycle) -> CrossSection {
        match sys {
            DynamicalSystem::Sft(_) => CrossSection::Cylinder((2 * cycle.len()).max(2)),
            DynamicalSystem::Torus(t) => {
                let np = (t.degree as i64).pow(cycle.len() as u32);
                CrossSection::Interval(rat_from(1, 2 * np))
            }
        }
    }

    /// Is z ∈ B(x_0, δ)?
    fn contains(&self, sys: &DynamicalSystem, cycle: &Cycle, z: &Point) -> bool {
        let x0 = cycle.point(0);
        match (self, sys) {
            (CrossSection::Cylinder(d), DynamicalSystem::Sft(_)) => {
                z.letters(*d) == x0.letters(*d)
            }
            (CrossSection::Interval(delta), DynamicalSystem::Torus(_)) => {
                &circle_dist(z.as_angle().unwrap(), x0.as_angle().unwrap()) < delta
            }
            _ => panic!("cross-section kind does not match the system"),
        }
    }

    /// Is z ∈ r^p(B(x_0, δ))?
    fn contains_expanded(&self, sys: &DynamicalSystem, cycle: &Cycle, z: &Point) -> bool {
        let p = cycle.len();
        let x0 = cycle.point(0);
        match (self, sys) {
            (CrossSection::Cylinder(d), DynamicalSystem::Sft(_)) => {
                let d = d.saturating_sub(p);
                z.letters(d) == x0.letters(d)
            }
            (CrossSection::Interval(delta), DynamicalSystem::Torus(t)) => {
                let scale = rat_int((t.degree as i64).pow(p as u32));
                let r = delta * scale;
                if r >= rat_from(1, 2) {
                    return true;
                }
                circle_dist(z.as_angle().unwrap(), x0.as_angle().unwrap()) < r
            }
            _ => panic!("cross-section kind does not match the system"),
        }
    }

    /// How many backward steps past the prefix guarantee membership.
    fn settle_depth(&self, sys: &DynamicalSystem) -> usize {
        match (self, sys) {
            (CrossSection::Cylinder(d), _) => *d,
            (CrossSection::Interval(delta), DynamicalSystem::Torus(t)) => {
                // distance to the cycle contracts by 1/N per backward step
                let mut bound = rat_from(1, 1);
                let n = rat_int(t.degree as i64);
                let mut k = 0usize;
                while &bound >= delta && k < 512 {
                    bound /= n.clone();
                    k += 1;
                }
                k + 1
            }
            _ => panic!("cross-section kind does not match the system"),
        }
    }
}

/// Membership predicate for the cross-section A: alignment ≡ 0, base in
/// r^p(B) ∖ B, and every later cycle-phase point back in B (checked to a
/// finite but sufficient depth).
pub fn in_cross_section(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    section: &CrossSection,
    path: &SolenoidPath,
) -> Result<bool> {
    let p = cycle.len();
    if path.align % p != 0 {
        return Ok(false);
    }
    if section.contains(sys, cycle, &path.base)
        || !section.contains_expanded(sys, cycle, &path.base)
    {
        return Ok(false);
    }
    let checks = (path.labels.len() + section.settle_depth(sys)) / p + 2;
    for j in 1..=checks {
        let z = path.point_at(sys, cycle, (j * p) as i64)?;
        if !section.contains(sys, cycle, &z) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Locate the unique k with ω = r̂^k(η), η in the cross-section: k is the
/// largest cycle-phase index whose point still falls outside B(x_0, δ).
/// Paths on the orbit of the pure cycle path have no such representative.
pub fn canonicalize_path(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    section: &CrossSection,
    path: &SolenoidPath,
) -> Result<(i64, SolenoidPath)> {
    let p = cycle.len() as i64;
    if path.is_pure_cycle(cycle) {
        return Err(EndoError::InvalidPoint(
            "pure cycle paths have no cross-section representative".into(),
        ));
    }
    let m = path.labels.len() as i64;
    // first candidate index ≥ m + settle with l ≡ −align (mod p)
    let settle = section.settle_depth(sys) as i64;
    let target = (-(path.align as i64)).rem_euclid(p);
    let mut l = m + settle;
    l += (target - l).rem_euclid(p);
    // safety: confirm the start really is inside B, walking up if not
    let mut guard = 0;
    while !section.contains(sys, cycle, &path.point_at(sys, cycle, l)?) {
        l += p;
        guard += 1;
        if guard > 1_000 {
            return Err(EndoError::Numerical("cross-section scan failed to settle".into()));
        }
    }
    // walk down to the last index outside B
    let mut guard = 0;
    loop {
        let lower = l - p;
        let z = path.point_at(sys, cycle, lower)?;
        if !section.contains(sys, cycle, &z) {
            if !section.contains_expanded(sys, cycle, &z) {
                return Err(EndoError::Numerical(
                    "cross-section violation fell outside r^p(B); δ too large".into(),
                ));
            }
            let eta = path.rhat_pow(sys, cycle, -lower)?;
            return Ok((lower, eta));
        }
        l = lower;
        guard += 1;
        if guard > 10_000 {
            return Err(EndoError::Numerical(
                "no cross-section representative found (pure-cycle-like path)".into(),
            ));
        }
    }
}

/// |‖F‖² − Σ_{η,k} 𝔠^{(k)}(z_0(η)) λ_C-mass of the matching cross-section
/// patterns|: both sides evaluated exactly; zero certifies the isometric
/// decomposition on the finite support of F.
pub fn phi_isometry_residual(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    rho: &InvariantMeasure,
    section: &CrossSection,
    f: &PathFunctional,
) -> Result<f64> {
    let g = f.consolidate_patterns(sys);
    let lhs = g.iter().fold(RadicalSum::zero(), |acc, (pat, c)| {
        acc.add(&c.norm_sqr().scale(&rho.cylinder_mass(&pat.base_word)))
    });

    let p = cycle.len() as i64;
    let settle = section.settle_depth(sys) as i64;
    let mut rhs = RadicalSum::zero();
    for (pat, c) in &g {
        // refine until the cross-section index is constant per cylinder
        let mut queue: Vec<PathPattern> =
            pat.refine_to_depth(sys, pat.base_word.len().max(settle as usize + 2));
        let cap = pat.base_word.len() + 4 * settle as usize + 16;
        while let Some(q) = queue.pop() {
            match pattern_section_index(sys, cycle, section, &q, settle, p)? {
                Some(k0) => {
                    let eta_word = pattern_point_word(sys, cycle, &q, k0);
                    let mut factor = Rat::one();
                    if k0 >= 0 {
                        for j in 1..=k0 {
                            // 𝔠(z_j) = #r⁻¹ of z_{j−1}
                            let fl = if j - 1 == 0 {
                                q.base_word[0]
                            } else {
                                q.label_at(sys, cycle, (j - 2) as usize)
                            };
                            factor *= rat_int(fiber_of_letter(sys, fl) as i64);
                        }
                    } else {
                        for j in 1..=(-k0) as usize {
                            factor *= rat_from(1, fiber_of_letter(sys, q.base_word[j]) as i64);
                        }
                    }
                    rhs = rhs.add(
                        &c.norm_sqr()
                            .scale(&factor)
                            .scale(&rho.cylinder_mass(&eta_word)),
                    );
                }
                None => {
                    if q.base_word.len() >= cap {
                        return Err(EndoError::Numerical(
                            "cross-section index not determined by the base cylinder; \
                             the functional sits too close to the cycle"
                                .into(),
                        ));
                    }
                    queue.extend(q.refine_once(sys));
                }
            }
        }
    }
    let diff = lhs.sub(&rhs);
    Ok(if diff.is_zero() { 0.0 } else { diff.to_f64().abs() })
}

/// Base word of z_{k} for a pattern (k of either sign); assumes enough
/// refinement depth for negative k.
fn pattern_point_word(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    pat: &PathPattern,
    k: i64,
) -> Vec<usize> {
    if k >= 0 {
        let mut w = Vec::with_capacity(k as usize + pat.base_word.len());
        for l in (0..k as usize).rev() {
            w.push(pat.label_at(sys, cycle, l));
        }
        w.extend_from_slice(&pat.base_word);
        w
    } else {
        pat.base_word[(-k) as usize..].to_vec()
    }
}

/// The cross-section index k₀ for every path in the pattern, when the base
/// cylinder determines it; `None` when refinement is needed.
fn pattern_section_index(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    section: &CrossSection,
    pat: &PathPattern,
    settle: i64,
    p: i64,
) -> Result<Option<i64>> {
    let m = pat.labels.len() as i64;
    let target = (-(pat.align as i64)).rem_euclid(p);
    let mut l = m + settle;
    l += (target - l).rem_euclid(p);
    // z_l membership from the available word, walking upward if unclear
    let mut guard = 0;
    loop {
        match pattern_membership(sys, cycle, section, pat, l)? {
            Some(true) => break,
            Some(false) => {
                l += p;
            }
            None => return Ok(None),
        }
        guard += 1;
        if guard > 1_000 {
            return Err(EndoError::Numerical("cross-section scan failed to settle".into()));
        }
    }
    loop {
        let lower = l - p;
        match pattern_membership(sys, cycle, section, pat, lower)? {
            Some(true) => l = lower,
            Some(false) => return Ok(Some(lower)),
            None => return Ok(None),
        }
    }
}

/// Membership of z_l in B for all paths of the pattern at once: `None`
/// when the truncated word/interval does not decide it.
fn pattern_membership(
    sys: &DynamicalSystem,
    cycle: &Cycle,
    section: &CrossSection,
    pat: &PathPattern,
    l: i64,
) -> Result<Option<bool>> {
    let x0 = cycle.point(0);
    match (section, sys) {
        (CrossSection::Cylinder(d), DynamicalSystem::Sft(_)) => {
            let avail = l + pat.base_word.len() as i64;
            if avail < *d as i64 {
                return Ok(None);
            }
            let w = pattern_point_word(sys, cycle, pat, l);
            Ok(Some(w[..*d] == x0.letters(*d)[..]))
        }
        (CrossSection::Interval(delta), DynamicalSystem::Torus(t)) => {
            let avail = l + pat.base_word.len() as i64;
            if avail <= 0 {
                return Ok(None);
            }
            let w = pattern_point_word(sys, cycle, pat, l);
            let n = rat_int(t.degree as i64);
            let mut lo = Rat::zero();
            let mut scale = Rat::one();
            for &dgt in &w {
                scale /= n.clone();
                lo += rat_int(dgt as i64) * scale.clone();
            }
            let width = scale;
            let hi = &lo + &width;
            let x = x0.as_angle().unwrap();
            let d_lo = circle_dist(&lo, x);
            let d_hi = circle_dist(&hi, x);
            let contains_center = {
                // does [lo, hi) contain x (mod 1)? width < 1 always here
                let rel = {
                    let r = x - &lo;
                    let fl = r.floor();
                    r - fl
                };
                rel < width
            };
            let inside = d_lo < *delta && d_hi <= *delta;
            let outside = !contains_center && d_lo >= *delta && d_hi >= *delta;
            if inside {
                Ok(Some(true))
            } else if outside {
                Ok(Some(false))
            } else {
                Ok(None)
            }
        }
        _ => Err(EndoError::InvalidSystem(
            "cross-section kind does not match the system".into(),
        )),
    }
}

impl PathFunctional {
    /// Disjoint-pattern form used by the isometry check (keeps labels and
    /// alignment, unlike the naive `consolidate`).
    pub fn consolidate_patterns(&self, sys: &DynamicalSystem) -> Vec<(PathPattern, ExactComplex)> {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<(Vec<usize>, usize), Vec<(PathPattern, ExactComplex)>> =
            BTreeMap::new();
        for (p, c) in &self.terms {
            groups
                .entry((p.labels.clone(), p.align))
                .or_default()
                .push((p.clone(), c.clone()));
        }
        let mut out = Vec::new();
        for ((labels, align), group) in groups {
            let depth = group.iter().map(|(p, _)| p.base_word.len()).max().unwrap();
            let mut merged: BTreeMap<Vec<usize>, ExactComplex> = BTreeMap::new();
            for (p, c) in group {
                for q in p.refine_to_depth(sys, depth) {
                    let e = merged.entry(q.base_word).or_insert_with(ExactComplex::zero);
                    *e = e.add(&c);
                }
            }
            for (w, c) in merged {
                if !c.is_zero() {
                    out.push((
                        PathPattern { labels: labels.clone(), align, base_word: w },
                        c,
                    ));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endo::{SftSystem, TorusSystem};
    use crate::measure::invariant_measure;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gm() -> DynamicalSystem {
        DynamicalSystem::Sft(SftSystem::golden_mean())
    }

    fn torus(n: u32) -> DynamicalSystem {
        DynamicalSystem::Torus(TorusSystem::new(n).unwrap())
    }

    fn gm_point(prefix: &[usize], period: &[usize]) -> Point {
        Point::word(&SftSystem::golden_mean(), prefix, period).unwrap()
    }

    fn gm_fixed_cycle(sys: &DynamicalSystem) -> Cycle {
        Cycle::through(sys, &gm_point(&[], &[0])).unwrap()
    }

    fn torus_zero_cycle(sys: &DynamicalSystem) -> Cycle {
        Cycle::through(sys, &Point::angle(Rat::zero())).unwrap()
    }

    #[test]
    fn enumerate_golden_mean_from_fixed_point() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let x = gm_point(&[], &[0]);
        let paths = enumerate_paths(&sys, &c, &x, 2).unwrap();
        let mut got: Vec<Vec<usize>> = paths.iter().map(|p| p.labels.clone()).collect();
        got.sort();
        // canonical prefixes end in letter "2" (index 1); 22 inadmissible
        assert_eq!(got, vec![vec![], vec![0, 1], vec![1]]);
    }

    #[test]
    fn enumerate_respects_base_admissibility() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        // base 2111…: only letter 1 may be prepended directly
        let x = gm_point(&[1], &[0]);
        let paths = enumerate_paths(&sys, &c, &x, 2).unwrap();
        let got: Vec<Vec<usize>> = paths.iter().map(|p| p.labels.clone()).collect();
        assert_eq!(got, vec![vec![], vec![0, 1]]);
    }

    #[test]
    fn enumerate_torus() {
        let sys = torus(2);
        let c = torus_zero_cycle(&sys);
        let paths = enumerate_paths(&sys, &c, &Point::angle(Rat::zero()), 1).unwrap();
        assert_eq!(paths.len(), 2);
        assert!(paths[0].labels.is_empty());
        assert_eq!(paths[1].labels, vec![1]);
        // second path passes through 1/2
        let z1 = paths[1].point_at(&sys, &c, 1).unwrap();
        assert_eq!(z1.as_angle().unwrap(), &rat_from(1, 2));
    }

    #[test]
    fn path_encoding_canonicalizes() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let x = gm_point(&[], &[0]);
        // trailing forced labels are absorbed into the tail
        let p = SolenoidPath::new(&sys, &c, x.clone(), vec![1, 0, 0], 0).unwrap();
        assert_eq!(p.labels, vec![1]);
        let q = SolenoidPath::new(&sys, &c, x, vec![0, 0], 0).unwrap();
        assert!(q.labels.is_empty());
        assert!(q.is_pure_cycle(&c));
    }

    #[test]
    fn rhat_roundtrip_and_alignment() {
        let sys = gm();
        // period-2 cycle 121212…
        let c = Cycle::through(&sys, &gm_point(&[], &[0, 1])).unwrap();
        assert_eq!(c.len(), 2);
        let base = gm_point(&[0, 0], &[0, 1]);
        let w = SolenoidPath::new(&sys, &c, base, vec![1], 0).unwrap();
        let fwd = w.rhat(&sys, &c).unwrap();
        assert_eq!(fwd.align, 1); // alignment drops by one mod p
        assert_eq!(fwd.rhat_inv(&sys, &c).unwrap(), w);
        let bwd = w.rhat_inv(&sys, &c).unwrap();
        assert_eq!(bwd.align, 1);
        assert_eq!(bwd.rhat(&sys, &c).unwrap(), w);
        // alignment stays consistent through longer excursions
        let far = w.rhat_pow(&sys, &c, 5).unwrap();
        assert_eq!(far.align, (w.align + 2 * c.len() * 5 - 5) % c.len());
        assert_eq!(far.rhat_pow(&sys, &c, -5).unwrap(), w);
    }

    #[test]
    fn cylinder_measure_examples() {
        let sys = gm();
        let filter = crate::ruelle::golden_mean_filter();
        let w = crate::ruelle::weight_from_filter(&sys, &filter).unwrap();
        // branch word hitting a point that starts 21 has weight zero
        let x = gm_point(&[], &[0]);
        assert_eq!(path_cylinder_measure(&sys, &w, &x, &[1, 0]).unwrap(), 0.0);
        assert_eq!(path_cylinder_measure(&sys, &w, &x, &[0, 0]).unwrap(), 1.0);

        let tsys = torus(2);
        let half = Observable::constant(&tsys, ExactComplex::from_rat(rat_from(1, 2)));
        let m = path_cylinder_measure(&tsys, &half, &Point::angle(Rat::zero()), &[1, 0, 1]).unwrap();
        assert!((m - 0.125).abs() < 1e-15);
    }

    #[test]
    fn integrate_and_inner_product() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let pat = PathPattern::new(&sys, &c, vec![], 0, vec![0]).unwrap();
        let f = PathFunctional::unit(pat);
        assert_eq!(f.integrate(&rho).as_rat(), Some(rat_from(2, 3)));
        // nested cylinders overlap on the deeper one
        let g = PathFunctional::unit(PathPattern::new(&sys, &c, vec![], 0, vec![0, 1]).unwrap());
        let ip = f.inner_product(&rho, &g);
        assert_eq!(ip.as_rat(), Some(rat_from(1, 3)));
        // different prefixes are disjoint
        let h = PathFunctional::unit(PathPattern::new(&sys, &c, vec![1], 0, vec![0]).unwrap());
        assert!(f.inner_product(&rho, &h).is_zero());
    }

    fn random_functional(
        sys: &DynamicalSystem,
        cycle: &Cycle,
        rng: &mut ChaCha8Rng,
        terms: usize,
    ) -> PathFunctional {
        random_functional_with(sys, cycle, rng, terms, false)
    }

    fn random_functional_with(
        sys: &DynamicalSystem,
        cycle: &Cycle,
        rng: &mut ChaCha8Rng,
        terms: usize,
        avoid_cycle_core: bool,
    ) -> PathFunctional {
        let n = sys.label_count();
        let mut out = Vec::new();
        while out.len() < terms {
            let align = rng.gen_range(0..cycle.len());
            let m = rng.gen_range(0..=2);
            let labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..n)).collect();
            let depth = rng.gen_range(1..=3);
            let word: Vec<usize> = (0..depth).map(|_| rng.gen_range(0..n)).collect();
            if let Ok(p) = PathPattern::new(sys, cycle, labels, align, word) {
                if avoid_cycle_core
                    && p.labels.is_empty()
                    && p.base_word == cycle.point(p.align).letters(p.base_word.len())
                {
                    continue;
                }
                let c = ExactComplex {
                    re: RadicalSum::from_rat(rat_int(rng.gen_range(-3..=3))),
                    im: RadicalSum::from_rat(rat_int(rng.gen_range(-3..=3))),
                };
                if !c.is_zero() {
                    out.push((p, c));
                }
            }
        }
        PathFunctional::from_terms(out)
    }

    #[test]
    fn u_is_unitary_and_invertible() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let phases = vec![ExactComplex::i()];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let f = random_functional(&sys, &c, &mut rng, 3);
            let g = random_functional(&sys, &c, &mut rng, 3);
            let uf = f.apply_u(&sys, &c, &phases).unwrap();
            let ug = g.apply_u(&sys, &c, &phases).unwrap();
            let lhs = uf.inner_product(&rho, &ug);
            let rhs = f.inner_product(&rho, &g);
            assert!(lhs.sub(&rhs).is_zero(), "inner product not preserved");
            let back = uf.apply_u_inverse(&sys, &c, &phases).unwrap();
            assert!(back.sub(&f).norm_sqr(&rho).is_zero(), "U⁻¹U ≠ id");
            let fwd = f
                .apply_u_inverse(&sys, &c, &phases)
                .unwrap()
                .apply_u(&sys, &c, &phases)
                .unwrap();
            assert!(fwd.sub(&f).norm_sqr(&rho).is_zero(), "UU⁻¹ ≠ id");
        }
    }

    #[test]
    fn u_unitary_on_period_two_cycle() {
        let sys = gm();
        let c = Cycle::through(&sys, &gm_point(&[], &[0, 1])).unwrap();
        let rho = invariant_measure(&sys, None).unwrap();
        let phases = vec![ExactComplex::i(), ExactComplex::from_int(-1)];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let f = random_functional(&sys, &c, &mut rng, 3);
            let uf = f.apply_u(&sys, &c, &phases).unwrap();
            assert!(
                uf.norm_sqr(&rho).sub(&f.norm_sqr(&rho)).is_zero(),
                "norm not preserved on the period-two cycle"
            );
            let back = uf.apply_u_inverse(&sys, &c, &phases).unwrap();
            assert!(back.sub(&f).norm_sqr(&rho).is_zero());
        }
    }

    #[test]
    fn u_on_unit_mass_example() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let phases = vec![ExactComplex::one()];
        let f = PathFunctional::unit(PathPattern::new(&sys, &c, vec![], 0, vec![0]).unwrap());
        let uf = f.apply_u(&sys, &c, &phases).unwrap();
        assert_eq!(uf.terms.len(), 1);
        let (pat, coeff) = &uf.terms[0];
        assert_eq!(pat.base_word, vec![0, 0]);
        assert!(pat.labels.is_empty());
        // √𝔠 = √2 on the deeper cylinder
        assert!(coeff.sub(&ExactComplex::real(RadicalSum::sqrt_int(2))).is_zero());
    }

    #[test]
    fn covariance_with_multiplication() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let phases = vec![ExactComplex::one()];
        let f_obs = crate::ruelle::golden_mean_filter().m0;
        let f_r = f_obs.compose_with_r(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..25 {
            let f = random_functional(&sys, &c, &mut rng, 3);
            // U π(f) U⁻¹ = π(f∘r)
            let lhs = f
                .apply_u_inverse(&sys, &c, &phases)
                .unwrap()
                .apply_pi(&sys, &f_obs)
                .unwrap()
                .apply_u(&sys, &c, &phases)
                .unwrap();
            let rhs = f.apply_pi(&sys, &f_r).unwrap();
            assert!(lhs.sub(&rhs).norm_sqr(&rho).is_zero());
        }
    }

    #[test]
    fn lambda_c_invariance() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let f = random_functional(&sys, &c, &mut rng, 4);
            let base = f.integrate(&rho);
            for n in -3i64..=3 {
                let g = f.weighted_pullback(&sys, &c, n).unwrap();
                assert!(
                    g.integrate(&rho).sub(&base).is_zero(),
                    "invariance failed at n = {n}"
                );
            }
        }
    }

    #[test]
    fn lambda_c_invariance_torus() {
        let sys = torus(3);
        let c = torus_zero_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..10 {
            let f = random_functional(&sys, &c, &mut rng, 3);
            let base = f.integrate(&rho);
            for n in -3i64..=3 {
                let g = f.weighted_pullback(&sys, &c, n).unwrap();
                assert!(g.integrate(&rho).sub(&base).is_zero());
            }
        }
    }

    #[test]
    fn canonicalize_golden_mean() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let section = CrossSection::default_for(&sys, &c);
        // base 2111…, no explicit prefix
        let w = SolenoidPath::new(&sys, &c, gm_point(&[1], &[0]), vec![], 0).unwrap();
        let (k, eta) = canonicalize_path(&sys, &c, &section, &w).unwrap();
        assert_eq!(k, 1);
        assert!(in_cross_section(&sys, &c, &section, &eta).unwrap());
        assert_eq!(eta.rhat_pow(&sys, &c, k).unwrap(), w);
        // nearby shifts of the representative leave the cross-section
        for j in [-3i64, -2, -1, 1, 2, 3] {
            if let Ok(shifted) = eta.rhat_pow(&sys, &c, j) {
                assert!(!in_cross_section(&sys, &c, &section, &shifted).unwrap());
            }
        }
    }

    #[test]
    fn canonicalize_recovers_prefix_offset() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let section = CrossSection::default_for(&sys, &c);
        // path leaving the cycle through an explicit branch three steps up
        let w = SolenoidPath::new(&sys, &c, gm_point(&[], &[0]), vec![0, 0, 1], 0).unwrap();
        let (k, eta) = canonicalize_path(&sys, &c, &section, &w).unwrap();
        assert_eq!(eta.rhat_pow(&sys, &c, k).unwrap(), w);
        assert!(in_cross_section(&sys, &c, &section, &eta).unwrap());
        // forward images of the fixed point never leave B, so k is set by
        // the branch position plus the neighborhood depth
        assert_eq!(k, 4);
    }

    #[test]
    fn canonicalize_rejects_pure_cycle() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let section = CrossSection::default_for(&sys, &c);
        let w = SolenoidPath::pure_cycle(&sys, &c, 0);
        assert!(canonicalize_path(&sys, &c, &section, &w).is_err());
    }

    #[test]
    fn canonicalize_torus_last_nonzero_entry() {
        let sys = torus(2);
        let c = torus_zero_cycle(&sys);
        let section = CrossSection::Interval(rat_from(1, 3));
        // (0, 1/2, 1/4, 1/8, …): the last nonzero entry sits at index 1
        let w = SolenoidPath::new(&sys, &c, Point::angle(Rat::zero()), vec![1], 0).unwrap();
        let (k, eta) = canonicalize_path(&sys, &c, &section, &w).unwrap();
        assert_eq!(k, 1);
        assert_eq!(eta.base.as_angle().unwrap(), &rat_from(1, 2));
        assert_eq!(eta.rhat_pow(&sys, &c, k).unwrap(), w);
        // pushing the branch deeper moves the index with it
        let w2 = w.rhat(&sys, &c).unwrap().rhat(&sys, &c).unwrap();
        let (k2, _) = canonicalize_path(&sys, &c, &section, &w2).unwrap();
        assert_eq!(k2, 3);
        // and stepping down the path moves it the other way
        let w3 = w.rhat_inv(&sys, &c).unwrap().rhat_inv(&sys, &c).unwrap();
        let (k3, _) = canonicalize_path(&sys, &c, &section, &w3).unwrap();
        assert_eq!(k3, -1);
    }

    #[test]
    fn phi_isometry_unit_masses() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let section = CrossSection::default_for(&sys, &c);
        let pat = PathPattern::new(&sys, &c, vec![], 0, vec![1]).unwrap();
        let f = PathFunctional::unit(pat);
        assert_eq!(phi_isometry_residual(&sys, &c, &rho, &section, &f).unwrap(), 0.0);
        let pat2 = PathPattern::new(&sys, &c, vec![1], 0, vec![0, 0]).unwrap();
        let f2 = PathFunctional::unit(pat2);
        assert_eq!(phi_isometry_residual(&sys, &c, &rho, &section, &f2).unwrap(), 0.0);
    }

    #[test]
    fn phi_isometry_random_functionals() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let section = CrossSection::default_for(&sys, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..10 {
            let f = random_functional_with(&sys, &c, &mut rng, 5, true);
            assert_eq!(phi_isometry_residual(&sys, &c, &rho, &section, &f).unwrap(), 0.0);
        }
    }

    #[test]
    fn phi_isometry_rejects_cycle_core() {
        // a pattern whose base cylinder contains the fixed point never
        // settles on a single cross-section index
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        let section = CrossSection::default_for(&sys, &c);
        let f = PathFunctional::unit(PathPattern::new(&sys, &c, vec![], 0, vec![0]).unwrap());
        assert!(phi_isometry_residual(&sys, &c, &rho, &section, &f).is_err());
    }

    #[test]
    fn phi_isometry_torus() {
        let sys = torus(2);
        let c = torus_zero_cycle(&sys);
        let rho = invariant_measure(&sys, None).unwrap();
        // the default radius 1/(2N^p) has dyadic boundaries, so membership
        // of every small enough digit cylinder is decidable
        let section = CrossSection::default_for(&sys, &c);
        let pat = PathPattern::new(&sys, &c, vec![], 0, vec![1]).unwrap();
        let f = PathFunctional::unit(pat);
        assert_eq!(phi_isometry_residual(&sys, &c, &rho, &section, &f).unwrap(), 0.0);
        let pat2 = PathPattern::new(&sys, &c, vec![1], 0, vec![0, 1]).unwrap();
        let f2 = PathFunctional::unit(pat2);
        assert_eq!(phi_isometry_residual(&sys, &c, &rho, &section, &f2).unwrap(), 0.0);
    }

    #[test]
    fn eval_matches_patterns() {
        let sys = gm();
        let c = gm_fixed_cycle(&sys);
        let pat = PathPattern::new(&sys, &c, vec![1], 0, vec![0]).unwrap();
        let f = PathFunctional::unit(pat);
        let hit = SolenoidPath::new(&sys, &c, gm_point(&[], &[0]), vec![1], 0).unwrap();
        let miss = SolenoidPath::new(&sys, &c, gm_point(&[1], &[0]), vec![], 0).unwrap();
        assert!(f.eval(&sys, &hit).sub(&ExactComplex::one()).is_zero());
        assert!(f.eval(&sys, &miss).is_zero());
    }
}
