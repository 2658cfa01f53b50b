//! Finite-to-one endomorphisms with exact eventually periodic points.
//!
//! Two system classes are supported: one-sided subshifts of finite type
//! given by a 0-1 adjacency matrix, and the circle maps x ↦ Nx mod 1.
//! Every point is an exact encoding (word with periodic tail, or a
//! rational angle), so all fiber and orbit computations are exact.

use num::{BigInt, Integer, One, Zero};

use crate::error::{EndoError, Result};
use crate::exact::{rat_int, Rat};

/// Ordered finite alphabet; letters are identified by index 0..size.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(EndoError::InvalidSystem("alphabet must be nonempty".into()));
        }
        let mut seen = labels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != labels.len() {
            return Err(EndoError::InvalidSystem("alphabet letters must be distinct".into()));
        }
        Ok(Alphabet { labels })
    }

    /// Letters named "1", "2", ... as in the two-letter examples.
    pub fn numeric(size: usize) -> Self {
        Alphabet {
            labels: (1..=size).map(|i| i.to_string()).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// One-sided subshift of finite type.
#[derive(Clone, Debug)]
pub struct SftSystem {
    pub alphabet: Alphabet,
    adjacency: Vec<Vec<u8>>,
    /// metric base c with 0 < c < 1
    pub contraction: Rat,
    /// column sums N(b) = #{a : A(a,b) = 1}
    col_sums: Vec<usize>,
}

impl SftSystem {
    pub fn new(alphabet: Alphabet, adjacency: Vec<Vec<u8>>, contraction: Rat) -> Result<Self> {
        let n = alphabet.size();
        if adjacency.len() != n || adjacency.iter().any(|row| row.len() != n) {
            return Err(EndoError::InvalidSystem("adjacency matrix shape mismatch".into()));
        }
        if adjacency.iter().flatten().any(|&e| e > 1) {
            return Err(EndoError::InvalidSystem("adjacency entries must be 0 or 1".into()));
        }
        let col_sums: Vec<usize> = (0..n)
            .map(|b| (0..n).filter(|&a| adjacency[a][b] == 1).count())
            .collect();
        if col_sums.iter().any(|&s| s == 0) {
            return Err(EndoError::InvalidSystem(
                "every column of the adjacency matrix needs at least one 1".into(),
            ));
        }
        if !(contraction > Rat::zero() && contraction < Rat::one()) {
            return Err(EndoError::InvalidSystem("contraction must satisfy 0 < c < 1".into()));
        }
        Ok(SftSystem {
            alphabet,
            adjacency,
            contraction,
            col_sums,
        })
    }

    /// Golden mean shift: two letters, word 22 forbidden, c = 1/2.
    pub fn golden_mean() -> Self {
        SftSystem::new(
            Alphabet::numeric(2),
            vec![vec![1, 1], vec![1, 0]],
            Rat::new(BigInt::one(), BigInt::from(2)),
        )
        .unwrap()
    }

    pub fn admissible(&self, a: usize, b: usize) -> bool {
        self.adjacency[a][b] == 1
    }

    /// N(b) = number of letters a with A(a,b) = 1, i.e. #r⁻¹ of any point
    /// starting with b.
    pub fn col_sum(&self, b: usize) -> usize {
        self.col_sums[b]
    }

    pub fn word_admissible(&self, w: &[usize]) -> bool {
        w.windows(2).all(|p| self.admissible(p[0], p[1]))
    }

    /// All admissible words of the given length, lexicographic order.
    pub fn admissible_words(&self, len: usize) -> Vec<Vec<usize>> {
        assert!(len >= 1);
        let n = self.alphabet.size();
        let mut out: Vec<Vec<usize>> = (0..n).map(|a| vec![a]).collect();
        for _ in 1..len {
            let mut next = Vec::new();
            for w in &out {
                let last = *w.last().unwrap();
                for b in 0..n {
                    if self.admissible(last, b) {
                        let mut w2 = w.clone();
                        w2.push(b);
                        next.push(w2);
                    }
                }
            }
            out = next;
        }
        out
    }
}

/// Circle endomorphism x ↦ Nx mod 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusSystem {
    pub degree: u32,
}

impl TorusSystem {
    pub fn new(degree: u32) -> Result<Self> {
        if degree < 2 {
            return Err(EndoError::InvalidSystem("torus degree must be at least 2".into()));
        }
        Ok(TorusSystem { degree })
    }
}

#[derive(Clone, Debug)]
pub enum DynamicalSystem {
    Sft(SftSystem),
    Torus(TorusSystem),
}

impl DynamicalSystem {
    pub fn sft(&self) -> Option<&SftSystem> {
        match self {
            DynamicalSystem::Sft(s) => Some(s),
            _ => None,
        }
    }

    pub fn torus(&self) -> Option<&TorusSystem> {
        match self {
            DynamicalSystem::Torus(t) => Some(t),
            _ => None,
        }
    }

    /// Number of backward branch labels (letters for shifts, residues for
    /// the torus).
    pub fn label_count(&self) -> usize {
        match self {
            DynamicalSystem::Sft(s) => s.alphabet.size(),
            DynamicalSystem::Torus(t) => t.degree as usize,
        }
    }
}

fn rat_mod1(r: Rat) -> Rat {
    let f = r.floor();
    r - f
}

/// Exact point: finite word followed by a periodic tail (shift systems) or
/// a rational angle in [0,1) (torus systems).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Point {
    Word { prefix: Vec<usize>, period: Vec<usize> },
    Angle(Rat),
}

/// Smallest period of a word under cyclic repetition.
fn primitive_root(w: &[usize]) -> Vec<usize> {
    let n = w.len();
    for d in 1..=n {
        if n % d == 0 && (d..n).all(|i| w[i] == w[i - d]) {
            return w[..d].to_vec();
        }
    }
    w.to_vec()
}

impl Point {
    /// Canonical SFT point: primitive period, shortest prefix. Validates
    /// admissibility of every adjacent pair including the seam and the
    /// period wrap-around.
    pub fn word(sys: &SftSystem, prefix: &[usize], period: &[usize]) -> Result<Point> {
        if period.is_empty() {
            return Err(EndoError::InvalidPoint("period must be nonempty".into()));
        }
        let n = sys.alphabet.size();
        if prefix.iter().chain(period.iter()).any(|&l| l >= n) {
            return Err(EndoError::InvalidPoint("letter index out of range".into()));
        }
        // admissibility across prefix, seam and wrap-around
        let mut full = prefix.to_vec();
        full.extend_from_slice(period);
        full.push(period[0]);
        if !sys.word_admissible(&full) {
            return Err(EndoError::InvalidPoint("word not admissible".into()));
        }
        let mut period = primitive_root(period);
        let mut prefix = prefix.to_vec();
        // absorb prefix letters that already follow the periodic tail
        while let Some(&last) = prefix.last() {
            if last == *period.last().unwrap() {
                prefix.pop();
                period.rotate_right(1);
            } else {
                break;
            }
        }
        Ok(Point::Word { prefix, period })
    }

    /// Purely periodic SFT point.
    pub fn periodic(sys: &SftSystem, period: &[usize]) -> Result<Point> {
        Point::word(sys, &[], period)
    }

    pub fn angle(a: Rat) -> Point {
        Point::Angle(rat_mod1(a))
    }

    /// Letter at position i of the one-sided word (shift points only).
    pub fn letter_at(&self, i: usize) -> usize {
        match self {
            Point::Word { prefix, period } => {
                if i < prefix.len() {
                    prefix[i]
                } else {
                    period[(i - prefix.len()) % period.len()]
                }
            }
            Point::Angle(_) => panic!("letter_at on a torus point"),
        }
    }

    pub fn letters(&self, len: usize) -> Vec<usize> {
        (0..len).map(|i| self.letter_at(i)).collect()
    }

    pub fn as_angle(&self) -> Option<&Rat> {
        match self {
            Point::Angle(a) => Some(a),
            _ => None,
        }
    }

    pub fn is_word(&self) -> bool {
        matches!(self, Point::Word { .. })
    }
}

/// r(x): shift off the first letter, or multiply the angle by N mod 1.
pub fn apply(sys: &DynamicalSystem, x: &Point) -> Result<Point> {
    match (sys, x) {
        (DynamicalSystem::Sft(s), Point::Word { prefix, period }) => {
            if prefix.is_empty() {
                let mut p = period.clone();
                p.rotate_left(1);
                Point::word(s, &[], &p)
            } else {
                Point::word(s, &prefix[1..], period)
            }
        }
        (DynamicalSystem::Torus(t), Point::Angle(a)) => {
            Ok(Point::angle(a * rat_int(t.degree as i64)))
        }
        _ => Err(EndoError::InvalidPoint("point kind does not match system".into())),
    }
}

pub fn apply_n(sys: &DynamicalSystem, x: &Point, n: usize) -> Result<Point> {
    let mut y = x.clone();
    for _ in 0..n {
        y = apply(sys, &y)?;
    }
    Ok(y)
}

/// Prepend one backward branch: the preimage of x selected by `label`.
/// Labels are letters (SFT, requires A(label, x₀) = 1) or residues
/// j ∈ 0..N with y = (x+j)/N (torus, always admissible).
pub fn prepend(sys: &DynamicalSystem, x: &Point, label: usize) -> Result<Point> {
    match (sys, x) {
        (DynamicalSystem::Sft(s), Point::Word { prefix, period }) => {
            let x0 = x.letter_at(0);
            if !s.admissible(label, x0) {
                return Err(EndoError::Inadmissible(format!(
                    "letter {} cannot precede {}",
                    s.alphabet.label(label),
                    s.alphabet.label(x0)
                )));
            }
            let mut p = vec![label];
            p.extend_from_slice(prefix);
            Point::word(s, &p, period)
        }
        (DynamicalSystem::Torus(t), Point::Angle(a)) => {
            let n = t.degree as i64;
            if label as i64 >= n {
                return Err(EndoError::Inadmissible("torus residue out of range".into()));
            }
            Ok(Point::angle((a + rat_int(label as i64)) / rat_int(n)))
        }
        _ => Err(EndoError::InvalidPoint("point kind does not match system".into())),
    }
}

/// The branch label that carries r(x) back to x.
pub fn label_of(sys: &DynamicalSystem, x: &Point) -> usize {
    match (sys, x) {
        (DynamicalSystem::Sft(_), p @ Point::Word { .. }) => p.letter_at(0),
        (DynamicalSystem::Torus(t), Point::Angle(a)) => {
            // x = (r(x)+j)/N  =>  j = floor(N x)
            let n = rat_int(t.degree as i64);
            (a * n).floor().to_integer().try_into().unwrap()
        }
        _ => panic!("point kind does not match system"),
    }
}

/// The complete fiber r⁻¹(x), canonically ordered.
pub fn preimages(sys: &DynamicalSystem, x: &Point) -> Result<Vec<Point>> {
    let mut out = Vec::new();
    for label in 0..sys.label_count() {
        match prepend(sys, x, label) {
            Ok(y) => out.push(y),
            Err(EndoError::Inadmissible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// 𝔠(x) = #r⁻¹(r(x)).
pub fn fiber_count_after(sys: &DynamicalSystem, x: &Point) -> Result<usize> {
    match sys {
        DynamicalSystem::Sft(s) => Ok(s.col_sum(x.letter_at(1))),
        DynamicalSystem::Torus(t) => {
            x.as_angle()
                .ok_or_else(|| EndoError::InvalidPoint("expected torus point".into()))?;
            Ok(t.degree as usize)
        }
    }
}

/// A cycle {x_0, …, x_{p−1}} with the indexing r(x_{i+1}) = x_i and
/// r(x_0) = x_{p−1}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cycle {
    points: Vec<Point>,
}

impl Cycle {
    /// Build the cycle through a purely periodic point; x_0 is the
    /// canonical (least) representative of the orbit.
    pub fn through(sys: &DynamicalSystem, x: &Point) -> Result<Cycle> {
        // collect the forward orbit
        let mut orbit = vec![x.clone()];
        loop {
            let next = apply(sys, orbit.last().unwrap())?;
            if next == orbit[0] {
                break;
            }
            if orbit.contains(&next) {
                return Err(EndoError::InvalidPoint("point is not purely periodic".into()));
            }
            if orbit.len() > 10_000 {
                return Err(EndoError::InvalidPoint("period too large or not periodic".into()));
            }
            orbit.push(next);
        }
        let p = orbit.len();
        // canonical representative
        let start = orbit
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        // r(x_{i+1}) = x_i means x_i walks the orbit backwards in time:
        // x_0 = orbit[start], x_1 = preimage of x_0 in the orbit = orbit[start-1], ...
        let points = (0..p)
            .map(|i| orbit[(start + p - (i % p)) % p].clone())
            .collect();
        Ok(Cycle { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i.rem_euclid(self.points.len())]
    }

    pub fn point_mod(&self, i: i64) -> &Point {
        let p = self.points.len() as i64;
        &self.points[i.rem_euclid(p) as usize]
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.points.contains(x)
    }

    /// Index i with x = x_i, if x lies on the cycle.
    pub fn index_of(&self, x: &Point) -> Option<usize> {
        self.points.iter().position(|y| y == x)
    }

    /// Label of the backward branch taken when a path tracking this cycle
    /// with alignment i extends from depth l to depth l+1; the branch
    /// carries (a point near) x_{i+l} to (a point near) x_{i+l+1}.
    pub fn tail_label(&self, sys: &DynamicalSystem, align: usize, l: i64) -> usize {
        let p = self.points.len() as i64;
        let idx = (align as i64 + l + 1).rem_euclid(p);
        label_of(sys, &self.points[idx as usize])
    }
}

/// All cycles of primitive length ≤ p_max, canonical representatives.
pub fn enumerate_cycles(sys: &DynamicalSystem, p_max: usize) -> Result<Vec<Cycle>> {
    assert!(p_max >= 1);
    let mut out = Vec::new();
    match sys {
        DynamicalSystem::Sft(s) => {
            for p in 1..=p_max {
                for w in s.admissible_words(p) {
                    if !s.admissible(w[p - 1], w[0]) {
                        continue;
                    }
                    if primitive_root(&w).len() != p {
                        continue;
                    }
                    // keep only the lexicographically least rotation
                    let mut least = true;
                    for k in 1..p {
                        let mut rot = w.clone();
                        rot.rotate_left(k);
                        if rot < w {
                            least = false;
                            break;
                        }
                    }
                    if least {
                        let x0 = Point::periodic(s, &w)?;
                        out.push(Cycle::through(&DynamicalSystem::Sft(s.clone()), &x0)?);
                    }
                }
            }
        }
        DynamicalSystem::Torus(t) => {
            let n = BigInt::from(t.degree);
            let mut seen: Vec<Point> = Vec::new();
            for p in 1..=p_max as u32 {
                let modulus = n.pow(p) - BigInt::one();
                let mut l = BigInt::zero();
                while l < modulus {
                    let x = Point::angle(Rat::new(l.clone(), modulus.clone()));
                    l += BigInt::one();
                    if seen.contains(&x) {
                        continue;
                    }
                    let cycle = Cycle::through(sys, &x)?;
                    if cycle.len() != p as usize {
                        // primitive period divides p but is smaller; covered earlier
                        continue;
                    }
                    for q in cycle.points() {
                        seen.push(q.clone());
                    }
                    out.push(cycle);
                }
            }
        }
    }
    Ok(out)
}

/// Repelling certificate (c, δ): both system classes expand uniformly, so
/// the certificate is explicit.
pub fn is_repelling(sys: &DynamicalSystem, cycle: &Cycle) -> (bool, f64, f64) {
    match sys {
        DynamicalSystem::Sft(s) => {
            let c = crate::exact::rat_to_f64(&s.contraction);
            (true, c, c)
        }
        DynamicalSystem::Torus(t) => {
            let c = 1.0 / (t.degree as f64).powi(cycle.len() as i32);
            (true, c, 0.25)
        }
    }
}

/// Length of the longest common initial block of two shift points. Both
/// points are eventually periodic, so disagreement (if any) appears within
/// prefix lengths plus one period lcm.
fn common_prefix_len(x: &Point, y: &Point) -> Option<usize> {
    let (px, qx) = match x {
        Point::Word { prefix, period } => (prefix.len(), period.len()),
        _ => panic!("shift point expected"),
    };
    let (py, qy) = match y {
        Point::Word { prefix, period } => (prefix.len(), period.len()),
        _ => panic!("shift point expected"),
    };
    let bound = px.max(py) + qx.lcm(&qy);
    (0..bound).find(|&i| x.letter_at(i) != y.letter_at(i))
}

/// d(x,y): c^{|x∧y|} on shift spaces, circle distance on the torus.
pub fn metric_dist(sys: &DynamicalSystem, x: &Point, y: &Point) -> Result<Rat> {
    match sys {
        DynamicalSystem::Sft(s) => {
            if !x.is_word() || !y.is_word() {
                return Err(EndoError::InvalidPoint("expected shift points".into()));
            }
            match common_prefix_len(x, y) {
                None => Ok(Rat::zero()),
                Some(k) => {
                    let mut d = Rat::one();
                    for _ in 0..k {
                        d *= s.contraction.clone();
                    }
                    Ok(d)
                }
            }
        }
        DynamicalSystem::Torus(_) => {
            let a = x
                .as_angle()
                .ok_or_else(|| EndoError::InvalidPoint("expected torus point".into()))?;
            let b = y
                .as_angle()
                .ok_or_else(|| EndoError::InvalidPoint("expected torus point".into()))?;
            let diff = rat_mod1(a - b);
            let other = Rat::one() - diff.clone();
            Ok(diff.min(other))
        }
    }
}

/// Circle distance helper used by the torus cross-section tests.
pub fn circle_dist(a: &Rat, b: &Rat) -> Rat {
    let diff = rat_mod1(a - b);
    let other = Rat::one() - diff.clone();
    diff.min(other)
}
