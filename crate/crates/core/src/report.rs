//! Versioned report envelopes, CSV tables and the golden-file harness.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::bounds;
use crate::dag::{builtin, classify_designs, Design};
use crate::error::{assumptions, Error, Result};
use crate::fixtures::{fixture, Flavor};
use crate::pipelines::{self, estimands, identify, Atom, PipelineDesign, PipelineOptions, QtePoint};
use crate::prob::MASS_TOL;
use crate::relabel::{self, RelabelRule};
use crate::spectral;

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL: &str = "triproxy";
/// Agreement required between a golden value and a fresh run.
pub const GOLDEN_TOL: f64 = 1e-6;

/// Every numerical tolerance a run may consult.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub mass: f64,
    pub rank: f64,
    pub eigen_gap: f64,
    pub imaginary: f64,
    pub negativity: f64,
    pub solve_condition: f64,
    pub projection: f64,
    pub match_tie: f64,
    pub atom_merge: f64,
    pub alpha_collision: f64,
    pub state_mass: f64,
    pub point_identification: f64,
}

impl Tolerances {
    pub fn from_options(opts: &PipelineOptions) -> Tolerances {
        Tolerances {
            mass: MASS_TOL,
            rank: spectral::RANK_TOL,
            eigen_gap: opts.hs.eigen_gap_tol,
            imaginary: opts.hs.imag_tol,
            negativity: spectral::NEGATIVITY_TOL,
            solve_condition: opts.solve_condition_limit,
            projection: opts.projection_tol,
            match_tie: spectral::MATCH_TIE_TOL,
            atom_merge: pipelines::ATOM_MERGE_TOL,
            alpha_collision: relabel::ALPHA_COLLISION_TOL,
            state_mass: bounds::STATE_MASS_TOL,
            point_identification: bounds::POINT_TOL,
        }
    }
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances::from_options(&PipelineOptions::new(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub tool: String,
    pub version: String,
    pub format_version: u32,
    pub verb: String,
    pub config_hash: String,
    pub config: Value,
    pub tolerances: Tolerances,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(verb: &str, config: &impl Serialize, inputs: &[Vec<u8>], tolerances: Tolerances, result: T) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(Report {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            format_version: FORMAT_VERSION,
            verb: verb.into(),
            config_hash: config_hash(&config, inputs)?,
            config,
            tolerances,
            result,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// SHA-256 over the canonical config JSON followed by every input's bytes.
pub fn config_hash(config: &Value, inputs: &[Vec<u8>]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    for input in inputs {
        h.update((input.len() as u64).to_le_bytes());
        h.update(input);
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_qte_csv(path: &Path, rows: &[QtePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["tau", "quantile_untreated", "quantile_treated", "effect"])?;
    for r in rows {
        w.write_record([r.tau, r.quantile_untreated, r.quantile_treated, r.effect].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One table holding `F_{β(W)}` (scope `all`) and each `F_{β(W)|X=x}`.
pub fn write_cate_csv(path: &Path, overall: &[Atom], given_x: &[Vec<Atom>], treatment: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scope", "value", "mass", "cdf"])?;
    let scopes = std::iter::once(("all".to_string(), overall))
        .chain(given_x.iter().enumerate().map(|(x, a)| (format!("{treatment}={x}"), a.as_slice())));
    for (scope, atoms) in scopes {
        for a in atoms {
            w.write_record([scope.clone(), a.value.to_string(), a.mass.to_string(), a.cdf.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Field-by-field differences between two JSON values; numbers agree when
/// within `tol`.
pub fn diff_json(expected: &Value, actual: &Value, tol: f64) -> Vec<String> {
    let mut out = Vec::new();
    diff_into("$", expected, actual, tol, &mut out);
    out
}

fn diff_into(path: &str, e: &Value, a: &Value, tol: f64, out: &mut Vec<String>) {
    match (e, a) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap_or(f64::NAN), y.as_f64().unwrap_or(f64::NAN));
            if !((x - y).abs() <= tol) {
                out.push(format!("{path}: expected {x}, found {y}"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}: expected {} entries, found {}", x.len(), y.len()));
                return;
            }
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                diff_into(&format!("{path}[{i}]"), p, q, tol, out);
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            for (k, p) in x {
                match y.get(k) {
                    Some(q) => diff_into(&format!("{path}.{k}"), p, q, tol, out),
                    None => out.push(format!("{path}.{k}: missing")),
                }
            }
            for k in y.keys().filter(|k| !x.contains_key(*k)) {
                out.push(format!("{path}.{k}: unexpected"));
            }
        }
        _ if e == a => {}
        _ => out.push(format!("{path}: expected {e}, found {a}")),
    }
}

/// A named end-to-end scenario over a builtin graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GoldenFixture {
    pub name: &'static str,
    pub figure: &'static str,
    pub latent_dim: usize,
    pub flavor: Flavor,
    pub seed: u64,
    pub relabel: Option<&'static str>,
}

pub const GOLDEN_FIXTURES: [GoldenFixture; 4] = [
    GoldenFixture {
        name: "fig1a-early-late-tests",
        figure: "fig1a",
        latent_dim: 2,
        flavor: Flavor::UnbiasedZ,
        seed: 11,
        relabel: Some("mean-unbiased"),
    },
    GoldenFixture {
        name: "fig1c-post-graduation-tests",
        figure: "fig1c",
        latent_dim: 2,
        flavor: Flavor::Generic,
        seed: 12,
        relabel: None,
    },
    GoldenFixture {
        name: "fig1d-auxiliary",
        figure: "fig1d",
        latent_dim: 2,
        flavor: Flavor::Generic,
        seed: 13,
        relabel: None,
    },
    GoldenFixture {
        name: "fig1b-double-only",
        figure: "fig1b",
        latent_dim: 2,
        flavor: Flavor::Generic,
        seed: 14,
        relabel: None,
    },
];

pub fn golden_fixture(name: &str) -> Result<GoldenFixture> {
    GOLDEN_FIXTURES
        .into_iter()
        .find(|g| g.name == name)
        .ok_or_else(|| Error::InvalidInput(format!("no builtin fixture `{name}`")))
}

pub fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("golden")
}

/// Values a golden file pins down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenReport {
    pub fixture: String,
    pub figure: String,
    pub designs: Vec<Design>,
    pub design: Option<PipelineDesign>,
    pub latent_dim: usize,
    pub ate: Option<f64>,
    pub att: Option<f64>,
    pub atu: Option<f64>,
    pub potential: Vec<Vec<f64>>,
    pub cate_distribution: Vec<Atom>,
    /// `E[Y(1)−Y(0)|W=w]` by recovered value of `w`, when relabeled.
    pub cate_by_value: Option<Vec<f64>>,
}

/// Outcome of an end-to-end run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndToEnd {
    pub golden_path: String,
    pub blessed: bool,
    pub report: GoldenReport,
}

/// Simulate, identify, relabel and compare with the stored golden file.
/// With `bless`, the golden file is (re)written from the oracle instead.
pub fn end_to_end(name: &str, golden_dir: &Path, bless: bool) -> Result<EndToEnd> {
    let g = golden_fixture(name)?;
    let fx = fixture(g.figure, g.latent_dim, g.flavor, g.seed)?;
    let dag = builtin(g.figure)?;
    let designs: Vec<Design> = classify_designs(&dag)?.designs.keys().copied().collect();
    let path = golden_dir.join(format!("{name}.json"));
    let base = GoldenReport {
        fixture: name.into(),
        figure: fx.figure.clone(),
        designs: designs.clone(),
        design: fx.design,
        latent_dim: g.latent_dim,
        ate: None,
        att: None,
        atu: None,
        potential: Vec::new(),
        cate_distribution: Vec::new(),
        cate_by_value: None,
    };
    let triple = designs.iter().any(|d| d.is_triple_proxy());
    let refuse = || Error::NoTripleProxyDesign {
        graph: fx.figure.clone(),
        available: designs.iter().map(|d| format!("{d:?}")).collect(),
        assumption: assumptions::HS_INDEPENDENCE,
    };

    let expected = if triple {
        let o = fx.oracle()?;
        GoldenReport {
            ate: Some(o.ate),
            att: Some(o.att),
            atu: Some(o.atu),
            potential: o.potential.clone(),
            cate_distribution: o.cate_distribution.clone(),
            cate_by_value: g.relabel.map(|_| o.cate.clone()),
            ..base.clone()
        }
    } else {
        base.clone()
    };
    if bless {
        fs::create_dir_all(golden_dir)?;
        fs::write(&path, serde_json::to_string_pretty(&expected)? + "\n")?;
    }
    let golden: GoldenReport = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if !triple {
        let diffs = diff_json(&serde_json::to_value(&golden)?, &serde_json::to_value(&base)?, GOLDEN_TOL);
        if !diffs.is_empty() {
            return Err(Error::GoldenMismatch(diffs));
        }
        return Err(refuse());
    }

    let design = fx.design.ok_or_else(refuse)?;
    let opts = PipelineOptions::new(g.latent_dim);
    let model = identify(design, &fx.observed_joint()?, &opts)?;
    let est = estimands(&model)?;
    let cate_by_value = match g.relabel {
        Some(rule) => {
            let rule: RelabelRule = rule.parse()?;
            let labeled = relabel::relabel(&model, &rule, &[])?;
            let beta = labeled.cate()?;
            let values = labeled.values.clone().unwrap_or_default();
            let mut by_value = vec![0.0; beta.len()];
            for (state, v) in values.iter().enumerate() {
                let idx = v[0].round();
                if idx < 0.0 || idx as usize >= by_value.len() {
                    return Err(Error::InvalidInput(format!("recovered latent value {} out of range", v[0])));
                }
                by_value[idx as usize] = beta[state];
            }
            Some(by_value)
        }
        None => None,
    };
    let actual = GoldenReport {
        ate: est.ate,
        att: est.att,
        atu: est.atu,
        potential: est.potential.clone(),
        cate_distribution: est.cate_distribution.clone(),
        cate_by_value,
        ..base
    };
    let diffs = diff_json(&serde_json::to_value(&golden)?, &serde_json::to_value(&actual)?, GOLDEN_TOL);
    if !diffs.is_empty() {
        return Err(Error::GoldenMismatch(diffs));
    }
    Ok(EndToEnd { golden_path: path.display().to_string(), blessed: bless, report: actual })
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    #[test]
    fn hash_tracks_config_and_inputs() {
        let c = json!({"design": "outcome", "latent_dim": 2});
        let h = config_hash(&c, &[b"abc".to_vec()]).unwrap();
        assert_eq!(h.len(), 64);
        assert_eq!(h, config_hash(&c, &[b"abc".to_vec()]).unwrap());
        assert_ne!(h, config_hash(&c, &[b"abd".to_vec()]).unwrap());
        assert_ne!(h, config_hash(&json!({"design": "outcome", "latent_dim": 3}), &[b"abc".to_vec()]).unwrap());
        // Input boundaries are part of the hash.
        assert_ne!(
            config_hash(&c, &[b"ab".to_vec(), b"c".to_vec()]).unwrap(),
            config_hash(&c, &[b"a".to_vec(), b"bc".to_vec()]).unwrap()
        );
    }

    #[test]
    fn diff_reports_paths_beyond_tolerance() {
        let e = json!({"ate": 0.25, "pmf": [0.5, 0.5], "name": "a"});
        assert!(diff_json(&e, &json!({"ate": 0.2500000001, "pmf": [0.5, 0.5], "name": "a"}), 1e-6).is_empty());
        let d = diff_json(&e, &json!({"ate": 0.26, "pmf": [0.5], "extra": 1}), 1e-6);
        assert_eq!(d.len(), 4, "{d:?}");
        assert!(d.iter().any(|l| l.starts_with("$.ate")));
        assert!(d.iter().any(|l| l.starts_with("$.pmf")));
    }

    #[test]
    fn csv_tables_have_headers() {
        let dir = tempfile::tempdir().unwrap();
        let q = dir.path().join("qte.csv");
        write_qte_csv(&q, &[QtePoint { tau: 0.5, quantile_untreated: 1.0, quantile_treated: 2.0, effect: 1.0 }]).unwrap();
        assert_eq!(fs::read_to_string(&q).unwrap(), "tau,quantile_untreated,quantile_treated,effect\n0.5,1,2,1\n");
        let c = dir.path().join("cate.csv");
        let a = vec![Atom { value: 0.1, mass: 1.0, cdf: 1.0 }];
        write_cate_csv(&c, &a, &[a.clone(), a.clone()], "X").unwrap();
        let text = fs::read_to_string(&c).unwrap();
        assert_eq!(text.lines().next(), Some("scope,value,mass,cdf"));
        assert_eq!(text.lines().filter(|l| l.starts_with("X=")).count(), 2);
    }

    #[test]
    fn reports_embed_provenance() {
        let r = Report::new("identify", &json!({"seed": 7}), &[], Tolerances::default(), 1.5).unwrap();
        let v: Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(v["tool"], TOOL);
        assert_eq!(v["format_version"], FORMAT_VERSION);
        assert_eq!(v["config"]["seed"], 7);
        assert!(v["tolerances"]["mass"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn unknown_fixture_rejected() {
        assert!(golden_fixture("fig9z").is_err());
        assert_eq!(golden_fixture("fig1d-auxiliary").unwrap().figure, "fig1d");
    }
}
