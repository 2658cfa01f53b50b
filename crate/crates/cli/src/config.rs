//! JSON experiment configuration: exact numeric literals (rationals as
//! "p/q" strings, radicals as {coeff, sqrt} objects, complex numbers as
//! [re, im] pairs) and the analysis list.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use endosol::endo::{Alphabet, Cycle, DynamicalSystem, Point, SftSystem, TorusSystem};
use endosol::exact::{parse_rat, ExactComplex, RadicalSum, Rat};
use endosol::observable::Observable;
use endosol::ruelle::Filter;

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycle: Option<PointLit>,
    pub analyses: Vec<AnalysisConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Sft {
        alphabet: Vec<String>,
        adjacency: Vec<Vec<u8>>,
        contraction: String,
    },
    Torus {
        degree: u32,
    },
}

/// A sum of terms c·√s; a bare "p/q" string is the rational term, an
/// object {coeff, sqrt} is a radical term, and an array combines several.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadLit {
    Rational(String),
    Radical { coeff: String, sqrt: u64 },
    Sum(Vec<RadLit>),
}

/// Complex literal [re, im].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexLit(pub RadLit, pub RadLit);

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    Cylinder {
        depth: usize,
        /// keyed by concatenated alphabet labels, e.g. "11"
        table: BTreeMap<String, ComplexLit>,
        #[serde(skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<ComplexLit>>,
    },
    Trig {
        /// frequency (as a string key, e.g. "-1") to coefficient
        coeffs: BTreeMap<String, ComplexLit>,
        #[serde(skip_serializing_if = "Option::is_none")]
        phases: Option<Vec<ComplexLit>>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLit {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefix: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angle: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableLit {
    Indicator { word: Vec<String> },
    Constant { value: ComplexLit },
    Trig { coeffs: BTreeMap<String, ComplexLit> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnalysisConfig {
    Qmf {
        #[serde(default)]
        tolerance: f64,
    },
    LowPass {
        #[serde(default)]
        tolerance: f64,
    },
    /// Evaluate the scaling product on every path of prefix length ≤ m_max
    /// from the given base points.
    ScalingValues {
        m_max: usize,
        bases: Vec<PointLit>,
        #[serde(default)]
        expect_zero_or_one: bool,
    },
    /// Compute the harmonic function by both routes and compare.
    HC {
        m_max: usize,
        depth: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        expect_constant: Option<ComplexLit>,
    },
    Correlation {
        f: ObservableLit,
        m_max: usize,
        #[serde(default)]
        tolerance: f64,
    },
    /// Cylinder masses up to `depth` plus the strong-invariance residual.
    Measure {
        depth: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        expect: Option<BTreeMap<String, String>>,
    },
    WCycles {
        p_max: usize,
        #[serde(default)]
        tol: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        expect: Option<Vec<Vec<String>>>,
    },
    ScalingRelation {
        m_max: usize,
        bases: Vec<PointLit>,
        #[serde(default)]
        tolerance: f64,
    },
    S0Isometry {
        pairs: Vec<(ObservableLit, ObservableLit)>,
        #[serde(default)]
        tolerance: f64,
    },
    PurityDecay {
        xi: ObservableLit,
        k_max: usize,
        samples: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        expect_rate: Option<f64>,
        #[serde(default = "default_rate_rel_tol")]
        rate_rel_tol: f64,
    },
    AveragingDecay {
        f: ObservableLit,
        n_max: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        expect_ratio: Option<f64>,
        #[serde(default = "default_ratio_tol")]
        ratio_tol: f64,
    },
    Multiplicity {
        x: PointLit,
        n_max: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        expect: Option<Vec<usize>>,
    },
}

fn default_rate_rel_tol() -> f64 {
    0.15
}

fn default_ratio_tol() -> f64 {
    0.01
}

impl AnalysisConfig {
    pub fn name(&self) -> &'static str {
        match self {
            AnalysisConfig::Qmf { .. } => "qmf",
            AnalysisConfig::LowPass { .. } => "low_pass",
            AnalysisConfig::ScalingValues { .. } => "scaling_values",
            AnalysisConfig::HC { .. } => "h_c",
            AnalysisConfig::Correlation { .. } => "correlation",
            AnalysisConfig::Measure { .. } => "measure",
            AnalysisConfig::WCycles { .. } => "w_cycles",
            AnalysisConfig::ScalingRelation { .. } => "scaling_relation",
            AnalysisConfig::S0Isometry { .. } => "s0_isometry",
            AnalysisConfig::PurityDecay { .. } => "purity_decay",
            AnalysisConfig::AveragingDecay { .. } => "averaging_decay",
            AnalysisConfig::Multiplicity { .. } => "multiplicity",
        }
    }
}

fn parse_rat_lit(s: &str) -> Result<Rat, ConfigError> {
    parse_rat(s).ok_or_else(|| ConfigError(format!("cannot parse rational {s:?}")))
}

pub fn build_radical(lit: &RadLit) -> Result<RadicalSum, ConfigError> {
    Ok(match lit {
        RadLit::Rational(s) => RadicalSum::from_rat(parse_rat_lit(s)?),
        RadLit::Radical { coeff, sqrt } => RadicalSum::radical(parse_rat_lit(coeff)?, *sqrt),
        RadLit::Sum(terms) => {
            let mut acc = RadicalSum::zero();
            for t in terms {
                if matches!(t, RadLit::Sum(_)) {
                    return err("nested radical sums are not allowed");
                }
                acc = acc.add(&build_radical(t)?);
            }
            acc
        }
    })
}

pub fn build_complex(lit: &ComplexLit) -> Result<ExactComplex, ConfigError> {
    Ok(ExactComplex { re: build_radical(&lit.0)?, im: build_radical(&lit.1)? })
}

pub fn build_system(cfg: &SystemConfig) -> Result<DynamicalSystem, ConfigError> {
    match cfg {
        SystemConfig::Sft { alphabet, adjacency, contraction } => {
            let alphabet = Alphabet::new(alphabet.clone())
                .map_err(|e| ConfigError(e.to_string()))?;
            let c = parse_rat_lit(contraction)?;
            let s = SftSystem::new(alphabet, adjacency.clone(), c)
                .map_err(|e| ConfigError(e.to_string()))?;
            Ok(DynamicalSystem::Sft(s))
        }
        SystemConfig::Torus { degree } => Ok(DynamicalSystem::Torus(
            TorusSystem::new(*degree).map_err(|e| ConfigError(e.to_string()))?,
        )),
    }
}

fn letters(sys: &DynamicalSystem, labels: &[String]) -> Result<Vec<usize>, ConfigError> {
    let s = sys.sft().ok_or_else(|| ConfigError("letter words need a shift system".into()))?;
    labels
        .iter()
        .map(|l| {
            s.alphabet
                .index_of(l)
                .ok_or_else(|| ConfigError(format!("unknown letter {l:?}")))
        })
        .collect()
}

pub fn build_point(sys: &DynamicalSystem, lit: &PointLit) -> Result<Point, ConfigError> {
    match (sys, &lit.angle, &lit.period) {
        (DynamicalSystem::Torus(_), Some(a), None) => {
            if lit.prefix.is_some() {
                return err("circle points take an angle only");
            }
            Ok(Point::angle(parse_rat_lit(a)?))
        }
        (DynamicalSystem::Sft(s), None, Some(period)) => {
            let prefix = match &lit.prefix {
                Some(p) => letters(sys, p)?,
                None => Vec::new(),
            };
            let period = letters(sys, period)?;
            Point::word(s, &prefix, &period).map_err(|e| ConfigError(e.to_string()))
        }
        _ => err("point literal does not match the system kind"),
    }
}

pub fn build_cycle(sys: &DynamicalSystem, lit: &PointLit) -> Result<Cycle, ConfigError> {
    let x = build_point(sys, lit)?;
    Cycle::through(sys, &x).map_err(|e| ConfigError(e.to_string()))
}

fn parse_word_key(sys: &DynamicalSystem, key: &str) -> Result<Vec<usize>, ConfigError> {
    let s = sys.sft().ok_or_else(|| ConfigError("cylinder tables need a shift system".into()))?;
    // greedy longest-label match so multi-character labels work
    let mut rest = key;
    let mut out = Vec::new();
    'outer: while !rest.is_empty() {
        let mut candidates: Vec<usize> = (0..s.alphabet.size()).collect();
        candidates.sort_by_key(|&i| std::cmp::Reverse(s.alphabet.label(i).len()));
        for i in candidates {
            if let Some(r) = rest.strip_prefix(s.alphabet.label(i)) {
                out.push(i);
                rest = r;
                continue 'outer;
            }
        }
        return err(format!("cannot parse word key {key:?}"));
    }
    Ok(out)
}

fn build_trig_coeffs(
    coeffs: &BTreeMap<String, ComplexLit>,
) -> Result<BTreeMap<i64, ExactComplex>, ConfigError> {
    let mut t = BTreeMap::new();
    for (k, v) in coeffs {
        let freq: i64 = k
            .parse()
            .map_err(|_| ConfigError(format!("trig frequency {k:?} is not an integer")))?;
        t.insert(freq, build_complex(v)?);
    }
    Ok(t)
}

pub fn build_filter(sys: &DynamicalSystem, cfg: &FilterConfig) -> Result<Filter, ConfigError> {
    let (m0, phases) = match cfg {
        FilterConfig::Cylinder { depth, table, phases } => {
            let s = sys
                .sft()
                .ok_or_else(|| ConfigError("cylinder filters need a shift system".into()))?;
            let mut t = BTreeMap::new();
            for (k, v) in table {
                t.insert(parse_word_key(sys, k)?, build_complex(v)?);
            }
            let m0 = Observable::cylinder(s, *depth, t)
                .map_err(|e| ConfigError(e.to_string()))?;
            (m0, phases)
        }
        FilterConfig::Trig { coeffs, phases } => {
            if sys.torus().is_none() {
                return err("trig filters need a circle system");
            }
            (Observable::trig(build_trig_coeffs(coeffs)?), phases)
        }
    };
    match phases {
        Some(ps) => {
            let ps = ps.iter().map(build_complex).collect::<Result<Vec<_>, _>>()?;
            Filter::new(m0, ps).map_err(|e| ConfigError(e.to_string()))
        }
        None => Ok(Filter::plain(m0)),
    }
}

pub fn build_observable(
    sys: &DynamicalSystem,
    lit: &ObservableLit,
) -> Result<Observable, ConfigError> {
    match lit {
        ObservableLit::Indicator { word } => {
            let s = sys
                .sft()
                .ok_or_else(|| ConfigError("indicators need a shift system".into()))?;
            let w = letters(sys, word)?;
            Observable::indicator(s, &w).map_err(|e| ConfigError(e.to_string()))
        }
        ObservableLit::Constant { value } => {
            Ok(Observable::constant(sys, build_complex(value)?))
        }
        ObservableLit::Trig { coeffs } => {
            if sys.torus().is_none() {
                return err("trig observables need a circle system");
            }
            Ok(Observable::trig(build_trig_coeffs(coeffs)?))
        }
    }
}
