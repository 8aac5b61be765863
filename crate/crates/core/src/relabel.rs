//! Resolving the latent reordering from a centring functional of `f_{Z|W}`,
//! and effects of intervening on the confounder itself.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{assumptions, Error, Result};
use crate::pipelines::{quantile, LatentOutcomeModel, QUANTILE_SLACK};
use crate::prob::{MarkovKernel, ProbTensor, VarSpace};

/// Two centring values closer than this cannot be told apart.
pub const ALPHA_COLLISION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Functional {
    Mean,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelabelMode {
    /// The functional of `f_{Z|W}(·|w)` equals `w`.
    Unbiased,
    /// The functional is strictly increasing in each coordinate of `w`.
    Monotone,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelRule {
    pub functional: Functional,
    pub mode: RelabelMode,
    /// Level counts of a product-coded `W`; empty means scalar `W`.
    pub latent_coordinates: Vec<usize>,
    /// Numeric levels of each coordinate block of a product-coded `Z`; empty
    /// means scalar `Z` with its own levels.
    pub proxy_blocks: Vec<Vec<f64>>,
}

impl RelabelRule {
    pub fn scalar(functional: Functional, mode: RelabelMode) -> RelabelRule {
        RelabelRule { functional, mode, latent_coordinates: Vec::new(), proxy_blocks: Vec::new() }
    }

    fn coordinates(&self, latent_dim: usize) -> Result<Vec<usize>> {
        if self.latent_coordinates.is_empty() {
            return Ok(vec![latent_dim]);
        }
        let product: usize = self.latent_coordinates.iter().product();
        if product != latent_dim {
            return Err(Error::InvalidInput(format!(
                "coordinate counts {:?} do not multiply to the latent dimension {latent_dim}",
                self.latent_coordinates
            )));
        }
        Ok(self.latent_coordinates.clone())
    }

    fn blocks(&self, z: &VarSpace, coords: usize) -> Result<Vec<Vec<f64>>> {
        if self.proxy_blocks.is_empty() {
            if coords != 1 {
                return Err(Error::InvalidInput("product-coded W needs coordinate blocks for Z".into()));
            }
            return Ok(vec![z.numeric_levels()?.to_vec()]);
        }
        let size: usize = self.proxy_blocks.iter().map(Vec::len).product();
        if self.proxy_blocks.len() != coords || size != z.cardinality {
            return Err(Error::InvalidInput(format!(
                "Z blocks {:?} do not match {coords} coordinates over {} levels",
                self.proxy_blocks.iter().map(Vec::len).collect::<Vec<_>>(),
                z.cardinality
            )));
        }
        Ok(self.proxy_blocks.clone())
    }
}

impl FromStr for RelabelRule {
    type Err = Error;

    /// `mean-unbiased`, `median-unbiased`, `mean-monotone` or `median-monotone`.
    fn from_str(s: &str) -> Result<Self> {
        let (f, m) = s.split_once('-').ok_or_else(|| Error::InvalidInput(format!("unknown rule `{s}`")))?;
        let functional = match f {
            "mean" => Functional::Mean,
            "median" => Functional::Median,
            _ => return Err(Error::InvalidInput(format!("unknown functional `{f}`"))),
        };
        let mode = match m {
            "unbiased" => RelabelMode::Unbiased,
            "monotone" => RelabelMode::Monotone,
            _ => return Err(Error::InvalidInput(format!("unknown mode `{m}`"))),
        };
        Ok(RelabelRule::scalar(functional, mode))
    }
}

fn decode(mut flat: usize, cards: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; cards.len()];
    for d in (0..cards.len()).rev() {
        idx[d] = flat % cards[d];
        flat /= cards[d];
    }
    idx
}

fn functional_of(f: Functional, levels: &[f64], pmf: &[f64]) -> Result<f64> {
    match f {
        Functional::Mean => Ok(levels.iter().zip(pmf).map(|(l, p)| l * p).sum()),
        Functional::Median => quantile(levels, pmf, 0.5),
    }
}

/// `α(w)` per latent column, one entry per coordinate: `alpha[w][j]`.
pub fn compute_alpha(z_given_w: &MarkovKernel, rule: &RelabelRule) -> Result<Vec<Vec<f64>>> {
    let z = z_given_w.target();
    let k = z_given_w.given_configs();
    let coords = rule.coordinates(k)?;
    let blocks = rule.blocks(z, coords.len())?;
    let block_cards: Vec<usize> = blocks.iter().map(Vec::len).collect();
    let alpha: Vec<Vec<f64>> = (0..k)
        .map(|w| {
            let col = z_given_w.column(w);
            blocks
                .iter()
                .enumerate()
                .map(|(j, levels)| {
                    let mut pmf = vec![0.0; levels.len()];
                    for (flat, p) in col.iter().enumerate() {
                        pmf[decode(flat, &block_cards)[j]] += p;
                    }
                    functional_of(rule.functional, levels, &pmf)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    if coords.len() == 1 || rule.mode == RelabelMode::Unbiased {
        for a in 0..k {
            for b in a + 1..k {
                let d = alpha[a].iter().zip(&alpha[b]).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                if d <= ALPHA_COLLISION_TOL {
                    return Err(collision(rule, a, b));
                }
            }
        }
    }
    Ok(alpha)
}

fn collision(rule: &RelabelRule, first: usize, second: usize) -> Error {
    let assumption = match rule.mode {
        RelabelMode::Unbiased => assumptions::HS_UNBIASEDNESS,
        RelabelMode::Monotone => assumptions::MONOTONE_PROXY,
    };
    Error::AlphaCollision { first, second, assumption }
}

/// Per-coordinate rank of each state: states sharing a coordinate value
/// share the rank; the number of distinct values must match the coordinate.
fn coordinate_ranks(alpha: &[Vec<f64>], coords: &[usize], rule: &RelabelRule) -> Result<Vec<Vec<usize>>> {
    let k = alpha.len();
    let mut ranks = vec![vec![0; coords.len()]; k];
    for (j, &card) in coords.iter().enumerate() {
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| alpha[a][j].total_cmp(&alpha[b][j]));
        let mut rank = 0;
        for pair in order.windows(2) {
            if alpha[pair[1]][j] - alpha[pair[0]][j] > ALPHA_COLLISION_TOL {
                rank += 1;
            }
            ranks[pair[1]][j] = rank;
        }
        if rank + 1 != card {
            let first = order[0];
            let second = order[1.min(k - 1)];
            return Err(collision(rule, first, second));
        }
    }
    Ok(ranks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileState {
    pub tau: f64,
    /// Per-coordinate rank at quantile level `tau`.
    pub ranks: Vec<usize>,
    /// Latent state with those ranks.
    pub state: usize,
}

/// A latent model whose states are ordered by their centring values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledLatentModel {
    /// Latent states sorted ascending by `α` (lexicographically).
    pub base: LatentOutcomeModel,
    pub rule: RelabelRule,
    pub alpha: Vec<Vec<f64>>,
    /// Recovered values of `W` per state (unbiased mode).
    pub values: Option<Vec<Vec<f64>>>,
    /// Per-coordinate ranks per state (monotone mode).
    pub ranks: Option<Vec<Vec<usize>>>,
    pub quantiles: Vec<QuantileState>,
}

fn sorted_by_alpha(m: &LatentOutcomeModel, rule: &RelabelRule) -> Result<(LatentOutcomeModel, Vec<Vec<f64>>)> {
    let alpha = compute_alpha(&m.z_given_w, rule)?;
    let mut order: Vec<usize> = (0..alpha.len()).collect();
    order.sort_by(|&a, &b| {
        alpha[a].iter().zip(&alpha[b]).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    if order.iter().enumerate().all(|(i, &o)| i == o) {
        return Ok((m.clone(), alpha));
    }
    let sorted = order.iter().map(|&i| alpha[i].clone()).collect();
    Ok((m.permute_latent(&order)?, sorted))
}

/// Relabel under unbiasedness: state `w̃` takes the value `α(w̃)`.
pub fn relabel_unbiased(m: &LatentOutcomeModel, rule: &RelabelRule) -> Result<LabeledLatentModel> {
    if rule.mode != RelabelMode::Unbiased {
        return Err(Error::InvalidInput("relabel_unbiased needs an unbiased rule".into()));
    }
    let (base, alpha) = sorted_by_alpha(m, rule)?;
    Ok(LabeledLatentModel {
        base,
        rule: rule.clone(),
        values: Some(alpha.clone()),
        alpha,
        ranks: None,
        quantiles: Vec::new(),
    })
}

/// Relabel under monotonicity: states are addressed by quantile rank of
/// `α(W̃)` under `f̃_W`, one coordinate at a time.
pub fn relabel_monotone(m: &LatentOutcomeModel, rule: &RelabelRule, taus: &[f64]) -> Result<LabeledLatentModel> {
    if rule.mode != RelabelMode::Monotone {
        return Err(Error::InvalidInput("relabel_monotone needs a monotone rule".into()));
    }
    let (base, alpha) = sorted_by_alpha(m, rule)?;
    let coords = rule.coordinates(base.latent_dim())?;
    let ranks = coordinate_ranks(&alpha, &coords, rule)?;
    let fw = base.latent_marginal();
    let quantiles = taus
        .iter()
        .map(|&tau| {
            if !(tau > 0.0 && tau <= 1.0) {
                return Err(Error::TauOutOfRange(tau));
            }
            let q: Vec<usize> = coords
                .iter()
                .enumerate()
                .map(|(j, &card)| {
                    let mut mass = vec![0.0; card];
                    for (w, r) in ranks.iter().enumerate() {
                        mass[r[j]] += fw[w];
                    }
                    let mut acc = 0.0;
                    for (r, p) in mass.iter().enumerate() {
                        acc += p;
                        if acc >= tau - QUANTILE_SLACK {
                            return r;
                        }
                    }
                    card - 1
                })
                .collect();
            let state = ranks.iter().position(|r| *r == q).expect("every rank vector names a state");
            Ok(QuantileState { tau, ranks: q, state })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledLatentModel { base, rule: rule.clone(), alpha, values: None, ranks: Some(ranks), quantiles })
}

/// Dispatch on the rule's mode.
pub fn relabel(m: &LatentOutcomeModel, rule: &RelabelRule, taus: &[f64]) -> Result<LabeledLatentModel> {
    match rule.mode {
        RelabelMode::Unbiased => relabel_unbiased(m, rule),
        RelabelMode::Monotone => relabel_monotone(m, rule, taus),
    }
}

impl LabeledLatentModel {
    /// Latent state carrying the recovered value `value` (unbiased mode).
    pub fn state_of_value(&self, value: &[f64]) -> Result<usize> {
        let values = self.values.as_ref().ok_or_else(|| Error::InvalidInput("model is not value-labeled".into()))?;
        values
            .iter()
            .position(|v| v.iter().zip(value).all(|(a, b)| (a - b).abs() <= 1e-6))
            .ok_or_else(|| Error::InvalidInput(format!("no latent state with value {value:?}")))
    }

    /// Latent state at quantile level `tau` (monotone mode).
    pub fn state_at_quantile(&self, tau: f64) -> Result<usize> {
        self.quantiles
            .iter()
            .find(|q| (q.tau - tau).abs() <= 1e-12)
            .map(|q| q.state)
            .ok_or(Error::TauOutOfRange(tau))
    }

    /// `f_W` as the law of the recovered values.
    pub fn latent_law(&self) -> Vec<(Vec<f64>, f64)> {
        let fw = self.base.latent_marginal();
        self.alpha.iter().cloned().zip(fw).collect()
    }

    /// `E[Y(1)−Y(0) | W=w]` per relabeled state.
    pub fn cate(&self) -> Result<Vec<f64>> {
        self.base.cate()
    }

    /// `E[Y(1)−Y(0) | W=Q_W(τ)]` on the rule's quantile grid.
    pub fn cate_by_quantile(&self) -> Result<Vec<(f64, f64)>> {
        let beta = self.cate()?;
        Ok(self.quantiles.iter().map(|q| (q.tau, beta[q.state])).collect())
    }
}

/// Joint law of `Y(x1, w)` and `X`, axes `[Y(x1,w), X]`. Outcome, treatment
/// and cond-treatment designs use `f_{Y|XW}(y|x1,w) f_X(x2)`; the auxiliary
/// design averages over `V`: `Σ_v f_{Y|XWV}(y|x1,w,v) f_{VX}(v,x2)`.
pub fn confounder_effects(m: &LatentOutcomeModel, x1: usize, w: usize) -> Result<ProbTensor> {
    let ys = m.outcome();
    let (ny, k, nx) = (ys.cardinality, m.latent_dim(), m.treatment().cardinality);
    if x1 >= nx || w >= k {
        return Err(Error::InvalidInput(format!("intervention ({x1}, {w}) out of range")));
    }
    let mut values = vec![0.0; ny * nx];
    match (&m.y_given_wvx, &m.vwx_joint) {
        (Some(kern), Some(vwx)) => {
            let nv = vwx.axes()[0].cardinality;
            let g = k * nv * nx;
            for y in 0..ny {
                for x2 in 0..nx {
                    values[y * nx + x2] = (0..nv)
                        .map(|v| {
                            let fvx: f64 = (0..k).map(|w2| vwx.values()[(v * k + w2) * nx + x2]).sum();
                            kern.values()[y * g + (w * nv + v) * nx + x1] * fvx
                        })
                        .sum();
                }
            }
        }
        _ => {
            let fx: Vec<f64> = (0..nx).map(|x| (0..k).map(|w2| m.wx_joint.values()[w2 * nx + x]).sum()).collect();
            for y in 0..ny {
                for x2 in 0..nx {
                    values[y * nx + x2] = m.y_given_wx.values()[y * k * nx + w * nx + x1] * fx[x2];
                }
            }
        }
    }
    let axis = ys.renamed(format!("{}({x1},{w})", ys.name));
    ProbTensor::from_weights(vec![axis, m.treatment().clone()], values)
}

/// `E[Y(x1, w)]` for every `(x1, w)`: `means[x1][w]`.
pub fn confounder_means(m: &LatentOutcomeModel) -> Result<Vec<Vec<f64>>> {
    let (k, nx) = (m.latent_dim(), m.treatment().cardinality);
    (0..nx)
        .map(|x| {
            (0..k)
                .map(|w| {
                    let t = confounder_effects(m, x, w)?;
                    let name = t.axes()[0].name.clone();
                    t.mean(&name)
                })
                .collect()
        })
        .collect()
}
