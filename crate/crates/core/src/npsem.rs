//! Discrete structural equation models with explicit exogenous noise.
//!
//! Each node is a total function of its parents' levels and one private
//! categorical noise variable. Laws are computed exactly by enumerating noise
//! levels in topological order; noise levels that produce the same outputs in
//! every world being tracked are merged before descending.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dag::{CounterfactualQuery, Dag, Intervention};
use crate::error::{Error, Result};
use crate::prob::{for_each_index, strides, MarkovKernel, ProbTensor, VarSpace, MASS_TOL};

/// Default cap on the number of joint noise configurations.
pub const DEFAULT_ENUMERATION_LIMIT: u128 = 10_000_000;
/// Tolerance of the exact factorization test for counterfactual queries.
pub const COUNTERFACTUAL_CI_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
    #[serde(default)]
    pub parents: Vec<String>,
    pub noise_card: usize,
    /// Row-major over `(parent levels..., noise level)`.
    pub table: Vec<usize>,
    pub noise_pmf: Vec<f64>,
}

impl NodeSpec {
    pub fn space(&self) -> VarSpace {
        VarSpace { name: self.name.clone(), cardinality: self.cardinality, levels: self.levels.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNpsem", into = "RawNpsem")]
pub struct Npsem {
    nodes: Vec<NodeSpec>,
    dag: Dag,
    parent_idx: Vec<Vec<usize>>,
    enumeration_limit: u128,
}

#[derive(Serialize, Deserialize)]
struct RawNpsem {
    nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    roles: BTreeMap<String, String>,
}

impl TryFrom<RawNpsem> for Npsem {
    type Error = Error;
    fn try_from(raw: RawNpsem) -> Result<Self> {
        Npsem::new(raw.nodes)?.with_roles(raw.roles)
    }
}

impl From<Npsem> for RawNpsem {
    fn from(m: Npsem) -> Self {
        RawNpsem { roles: m.dag.roles().clone(), nodes: m.nodes }
    }
}

impl Npsem {
    pub fn new(nodes: Vec<NodeSpec>) -> Result<Npsem> {
        let names: Vec<String> = nodes.iter().map(|n| n.name.clone()).collect();
        let edges: Vec<(String, String)> =
            nodes.iter().flat_map(|n| n.parents.iter().map(move |p| (p.clone(), n.name.clone()))).collect();
        let dag = Dag::new(names, edges)?;
        let mut parent_idx = Vec::with_capacity(nodes.len());
        for n in &nodes {
            n.space().validate()?;
            let idx: Vec<usize> = n.parents.iter().map(|p| dag.index(p)).collect::<Result<_>>()?;
            let configs: usize = idx.iter().map(|&i| nodes[i].cardinality).product();
            if n.noise_card == 0 || n.noise_pmf.len() != n.noise_card {
                return Err(Error::InvalidInput(format!("`{}`: noise pmf length must equal noise_card", n.name)));
            }
            if n.table.len() != configs * n.noise_card {
                return Err(Error::ShapeMismatch { expected: configs * n.noise_card, found: n.table.len() });
            }
            if let Some(bad) = n.table.iter().find(|&&v| v >= n.cardinality) {
                return Err(Error::InvalidInput(format!("`{}`: table value {bad} out of range", n.name)));
            }
            let total: f64 = n.noise_pmf.iter().sum();
            if n.noise_pmf.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidInput(format!("`{}`: noise pmf is not a pmf", n.name)));
            }
            parent_idx.push(idx);
        }
        Ok(Npsem { nodes, dag, parent_idx, enumeration_limit: DEFAULT_ENUMERATION_LIMIT })
    }

    pub fn with_roles(mut self, roles: BTreeMap<String, String>) -> Result<Npsem> {
        self.dag = self.dag.with_roles(roles)?;
        Ok(self)
    }

    pub fn with_enumeration_limit(mut self, limit: u128) -> Npsem {
        self.enumeration_limit = limit;
        self
    }

    pub fn from_json(s: &str) -> Result<Npsem> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn spaces(&self) -> Vec<VarSpace> {
        self.nodes.iter().map(NodeSpec::space).collect()
    }

    pub fn node(&self, name: &str) -> Result<&NodeSpec> {
        Ok(&self.nodes[self.dag.index(name)?])
    }

    /// Node name bound to a role (`Y`, `X`, `W`, ...).
    pub fn role(&self, role: &str) -> Result<String> {
        self.dag.resolve_role(role).map(str::to_string).ok_or_else(|| Error::MissingRole(role.to_string()))
    }

    /// Number of joint noise configurations a naive enumeration would visit.
    pub fn noise_configurations(&self) -> u128 {
        self.nodes.iter().map(|n| n.noise_card as u128).product()
    }

    fn guard(&self) -> Result<()> {
        let configurations = self.noise_configurations();
        if configurations > self.enumeration_limit {
            return Err(Error::EnumerationTooLarge { configurations, limit: self.enumeration_limit });
        }
        Ok(())
    }

    fn parent_config(&self, node: usize, values: &[usize]) -> usize {
        self.parent_idx[node].iter().fold(0, |acc, &p| acc * self.nodes[p].cardinality + values[p])
    }

    /// Structural kernel `P(node | parents)` implied by the table and noise.
    pub fn structural_kernel(&self, name: &str) -> Result<MarkovKernel> {
        let i = self.dag.index(name)?;
        let n = &self.nodes[i];
        let given: Vec<VarSpace> = self.parent_idx[i].iter().map(|&p| self.nodes[p].space()).collect();
        let configs: usize = given.iter().map(|s| s.cardinality).product();
        let mut values = vec![0.0; n.cardinality * configs];
        for c in 0..configs {
            for u in 0..n.noise_card {
                values[n.table[c * n.noise_card + u] * configs + c] += n.noise_pmf[u];
            }
        }
        MarkovKernel::new(vec![n.space()], given, values)
    }

    /// Exact joint over all nodes (declaration order).
    pub fn observable_joint(&self) -> Result<ProbTensor> {
        self.guard()?;
        let out = self.enumerate(&[], None)?;
        ProbTensor::from_weights(self.spaces(), out)
    }

    /// Surgery: each listed node becomes a constant at the given level.
    pub fn intervene(&self, assignments: &[(&str, usize)]) -> Result<Npsem> {
        let mut nodes = self.nodes.clone();
        for &(name, level) in assignments {
            let i = self.dag.index(name)?;
            if level >= nodes[i].cardinality {
                return Err(Error::InvalidInput(format!("level {level} out of range for `{name}`")));
            }
            nodes[i].parents.clear();
            nodes[i].noise_card = 1;
            nodes[i].table = vec![level];
            nodes[i].noise_pmf = vec![1.0];
        }
        Ok(Npsem::new(nodes)?.with_roles(self.dag.roles().clone())?.with_enumeration_limit(self.enumeration_limit))
    }

    /// Cross-world joint of the outcome under every setting of `on`, together
    /// with all factual nodes. Arms share the same noise draw.
    pub fn counterfactual_joint(&self, on: &[&str]) -> Result<CounterfactualJoint> {
        self.guard()?;
        if on.is_empty() {
            return Err(Error::InvalidInput("intervention set is empty".into()));
        }
        let outcome = self.role("Y")?;
        let y = self.dag.index(&outcome)?;
        let on_idx: Vec<usize> = on.iter().map(|n| self.dag.index(n)).collect::<Result<_>>()?;
        if on_idx.contains(&y) {
            return Err(Error::InvalidInput("cannot intervene on the outcome".into()));
        }
        let cards: Vec<usize> = on_idx.iter().map(|&i| self.nodes[i].cardinality).collect();
        let mut arms = Vec::new();
        for_each_index(&cards, |idx| arms.push(idx.to_vec()));
        let clamps: Vec<Vec<(usize, usize)>> =
            arms.iter().map(|a| on_idx.iter().copied().zip(a.iter().copied()).collect()).collect();
        let values = self.enumerate(&clamps, Some(y))?;
        let ynode = &self.nodes[y];
        let mut axes: Vec<VarSpace> = arms
            .iter()
            .map(|a| {
                let label: Vec<String> = a.iter().map(usize::to_string).collect();
                VarSpace {
                    name: format!("{}({})", outcome, label.join(",")),
                    cardinality: ynode.cardinality,
                    levels: ynode.levels.clone(),
                }
            })
            .collect();
        axes.extend(self.spaces());
        let tensor = ProbTensor::from_weights(axes, values)?;
        Ok(CounterfactualJoint {
            tensor,
            outcome,
            intervened: on.iter().map(|s| s.to_string()).collect(),
            arms,
        })
    }

    /// Exact factorization test of a counterfactual independence statement
    /// (roles resolved through the model's role map).
    pub fn check_counterfactual_ci(&self, q: &CounterfactualQuery) -> Result<bool> {
        let x = self.role("X")?;
        let w = self.role("W")?;
        let on: Vec<&str> = match q.intervention {
            Intervention::Treatment => vec![x.as_str()],
            Intervention::TreatmentAndConfounder => vec![x.as_str(), w.as_str()],
        };
        let cf = self.counterfactual_joint(&on)?;
        let resolve = |set: &std::collections::BTreeSet<String>| -> Result<Vec<String>> {
            set.iter().map(|r| self.role(r)).collect()
        };
        let right = resolve(&q.right)?;
        let given = resolve(&q.given)?;
        let right: Vec<&str> = right.iter().map(String::as_str).collect();
        let given: Vec<&str> = given.iter().map(String::as_str).collect();
        for arm in &cf.arms {
            let axis = cf.axis_name(arm);
            if cf.tensor.ci_discrepancy(&[axis.as_str()], &right, &given)? > COUNTERFACTUAL_CI_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Depth-first exact enumeration. `clamps[a]` lists the clamped nodes of
    /// arm `a`; the factual world is always tracked. The returned array is
    /// row-major over `(outcome in each arm..., all nodes)`.
    fn enumerate(&self, clamps: &[Vec<(usize, usize)>], outcome: Option<usize>) -> Result<Vec<f64>> {
        let n = self.nodes.len();
        let worlds = 1 + clamps.len();
        let mut clamp = vec![vec![None; n]; worlds];
        for (a, c) in clamps.iter().enumerate() {
            for &(node, level) in c {
                clamp[a + 1][node] = Some(level);
            }
        }
        let mut out_cards: Vec<usize> = Vec::new();
        if let Some(y) = outcome {
            out_cards.extend(std::iter::repeat_n(self.nodes[y].cardinality, clamps.len()));
        }
        out_cards.extend(self.nodes.iter().map(|s| s.cardinality));
        let size: usize = out_cards.iter().product();
        let ctx = Ctx {
            m: self,
            order: self.dag.topological_order(),
            clamp,
            outcome,
            out_strides: strides(&out_cards),
            size,
        };
        let values = vec![vec![0usize; n]; worlds];
        let first = ctx.order[0];
        let groups = ctx.groups(first, &values);
        let parts: Vec<Vec<f64>> = groups
            .par_iter()
            .map(|(outs, p)| {
                let mut vals = values.clone();
                for (w, &o) in outs.iter().enumerate() {
                    vals[w][first] = o;
                }
                let mut acc = vec![0.0; size];
                ctx.descend(1, &mut vals, *p, &mut acc);
                acc
            })
            .collect();
        let mut total = vec![0.0; size];
        for part in parts {
            for (t, v) in total.iter_mut().zip(part) {
                *t += v;
            }
        }
        Ok(total)
    }

    /// Draw `n` i.i.d. rows of all nodes.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dists: Vec<WeightedIndex<f64>> = self
            .nodes
            .iter()
            .map(|s| WeightedIndex::new(&s.noise_pmf).map_err(|e| Error::InvalidInput(e.to_string())))
            .collect::<Result<_>>()?;
        let k = self.nodes.len();
        let mut rows = vec![0u32; n * k];
        let mut vals = vec![0usize; k];
        for r in 0..n {
            for &i in self.dag.topological_order() {
                let u = dists[i].sample(&mut rng);
                let c = self.parent_config(i, &vals);
                vals[i] = self.nodes[i].table[c * self.nodes[i].noise_card + u];
            }
            for i in 0..k {
                rows[r * k + i] = vals[i] as u32;
            }
        }
        Ok(Dataset { spaces: self.spaces(), rows })
    }

    /// Random model over `dag`: every structural kernel is an independent
    /// Dirichlet(1,...,1) draw per parent configuration.
    pub fn random(dag: &Dag, spaces: &[VarSpace], seed: u64) -> Result<Npsem> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut kernels = BTreeMap::new();
        for name in dag.nodes() {
            let space = find_space(spaces, name)?;
            let parents = dag.parents_of(name)?;
            let configs: usize =
                parents.iter().map(|p| find_space(spaces, p).map(|s| s.cardinality)).product::<Result<usize>>()?;
            let cols: Vec<Vec<f64>> = (0..configs).map(|_| dirichlet_flat(&mut rng, space.cardinality)).collect();
            kernels.insert(name.clone(), cols);
        }
        Npsem::from_kernels(dag, spaces, &kernels)
    }

    /// Encode per-configuration kernels (`kernels[node][parent config]` is a
    /// pmf over the node's levels) as table + noise by splitting the unit
    /// interval at every cumulative breakpoint.
    pub fn from_kernels(dag: &Dag, spaces: &[VarSpace], kernels: &BTreeMap<String, Vec<Vec<f64>>>) -> Result<Npsem> {
        let mut nodes = Vec::with_capacity(dag.nodes().len());
        for name in dag.nodes() {
            let space = find_space(spaces, name)?;
            let parents: Vec<String> = dag.parents_of(name)?.into_iter().map(str::to_string).collect();
            let cols = kernels.get(name).ok_or_else(|| Error::InvalidInput(format!("no kernel for `{name}`")))?;
            let (noise_pmf, table) = encode_kernels(cols, space.cardinality)?;
            nodes.push(NodeSpec {
                name: name.clone(),
                cardinality: space.cardinality,
                levels: space.levels.clone(),
                parents,
                noise_card: noise_pmf.len(),
                table,
                noise_pmf,
            });
        }
        Npsem::new(nodes)?.with_roles(dag.roles().clone())
    }
}

fn find_space<'a>(spaces: &'a [VarSpace], name: &str) -> Result<&'a VarSpace> {
    spaces.iter().find(|s| s.name == name).ok_or_else(|| Error::UnknownAxis(name.to_string()))
}

/// Uniform draw from the probability simplex.
pub fn dirichlet_flat<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn encode_kernels(cols: &[Vec<f64>], card: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut cums = Vec::with_capacity(cols.len());
    let mut breaks = vec![0.0, 1.0];
    for col in cols {
        if col.len() != card {
            return Err(Error::ShapeMismatch { expected: card, found: col.len() });
        }
        let total: f64 = col.iter().sum();
        if col.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("structural kernel column is not a pmf".into()));
        }
        let mut acc = 0.0;
        let cum: Vec<f64> = col[..card - 1]
            .iter()
            .map(|p| {
                acc += p / total;
                acc.min(1.0)
            })
            .collect();
        breaks.extend(cum.iter().copied());
        cums.push(cum);
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mut pmf = Vec::new();
    let mut mids = Vec::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            pmf.push(w[1] - w[0]);
            mids.push(0.5 * (w[0] + w[1]));
        }
    }
    let mut table = Vec::with_capacity(cols.len() * pmf.len());
    for cum in &cums {
        for &mid in &mids {
            table.push(cum.iter().filter(|&&c| c <= mid).count());
        }
    }
    Ok((pmf, table))
}

struct Ctx<'a> {
    m: &'a Npsem,
    order: &'a [usize],
    clamp: Vec<Vec<Option<usize>>>,
    outcome: Option<usize>,
    out_strides: Vec<usize>,
    size: usize,
}

impl Ctx<'_> {
    /// Noise levels of `node` grouped by their output tuple across worlds.
    fn groups(&self, node: usize, values: &[Vec<usize>]) -> Vec<(Vec<usize>, f64)> {
        let spec = &self.m.nodes[node];
        let configs: Vec<usize> = values.iter().map(|v| self.m.parent_config(node, v)).collect();
        let mut groups: Vec<(Vec<usize>, f64)> = Vec::new();
        for u in 0..spec.noise_card {
            let p = spec.noise_pmf[u];
            if p == 0.0 {
                continue;
            }
            let outs: Vec<usize> = (0..values.len())
                .map(|w| self.clamp[w][node].unwrap_or_else(|| spec.table[configs[w] * spec.noise_card + u]))
                .collect();
            match groups.iter_mut().find(|(o, _)| *o == outs) {
                Some(g) => g.1 += p,
                None => groups.push((outs, p)),
            }
        }
        groups
    }

    fn descend(&self, depth: usize, values: &mut [Vec<usize>], prob: f64, acc: &mut [f64]) {
        if depth == self.order.len() {
            let arms = values.len() - 1;
            let mut idx = 0;
            if let Some(y) = self.outcome {
                for a in 0..arms {
                    idx += values[a + 1][y] * self.out_strides[a];
                }
            }
            let off = if self.outcome.is_some() { arms } else { 0 };
            for (i, &v) in values[0].iter().enumerate() {
                idx += v * self.out_strides[off + i];
            }
            debug_assert!(idx < self.size);
            acc[idx] += prob;
            return;
        }
        let node = self.order[depth];
        for (outs, p) in self.groups(node, values) {
            for (w, &o) in outs.iter().enumerate() {
                values[w][node] = o;
            }
            self.descend(depth + 1, values, prob * p, acc);
        }
    }
}

/// Cross-world joint: one potential-outcome axis per arm, then every node.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualJoint {
    pub tensor: ProbTensor,
    pub outcome: String,
    pub intervened: Vec<String>,
    /// Level indices of the intervened nodes in each arm.
    pub arms: Vec<Vec<usize>>,
}

impl CounterfactualJoint {
    /// Axis name of the potential outcome in `arm`, e.g. `Y(1)` or `Y(0,2)`.
    pub fn axis_name(&self, arm: &[usize]) -> String {
        let label: Vec<String> = arm.iter().map(usize::to_string).collect();
        format!("{}({})", self.outcome, label.join(","))
    }

    /// Law of the potential outcome in one arm.
    pub fn potential(&self, arm: &[usize]) -> Result<ProbTensor> {
        self.tensor.marginal(&[self.axis_name(arm).as_str()])
    }

    /// Mean of the potential outcome in one arm.
    pub fn potential_mean(&self, arm: &[usize]) -> Result<f64> {
        self.tensor.mean(&self.axis_name(arm))
    }

    /// Mean of `Y(arm)` conditional on `node = level`.
    pub fn conditional_mean(&self, arm: &[usize], node: &str, level: usize) -> Result<f64> {
        let axis = self.axis_name(arm);
        self.tensor.marginal(&[axis.as_str(), node])?.slice(node, level)?.mean(&axis)
    }

    /// Largest deviation from consistency: on the event that the intervened
    /// nodes equal an arm's setting, the arm's outcome equals the factual one.
    pub fn consistency_violation(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for arm in &self.arms {
            let axis = self.axis_name(arm);
            let mut names: Vec<&str> = vec![axis.as_str(), self.outcome.as_str()];
            names.extend(self.intervened.iter().map(String::as_str));
            let m = self.tensor.marginal(&names)?;
            let shape = m.shape();
            let mut flat = 0;
            let values = m.values();
            for_each_index(&shape, |idx| {
                if idx[2..] == arm[..] && idx[0] != idx[1] {
                    worst = worst.max(values[flat]);
                }
                flat += 1;
            });
        }
        Ok(worst)
    }
}

/// I.i.d. draws; `rows` is row-major with one column per space.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spaces: Vec<VarSpace>,
    pub rows: Vec<u32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        if self.spaces.is_empty() {
            0
        } else {
            self.rows.len() / self.spaces.len()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[u32] {
        let k = self.spaces.len();
        &self.rows[i * k..(i + 1) * k]
    }
}

/// Plug-in frequency tensor of a dataset.
pub fn empirical_tensor(data: &Dataset) -> Result<ProbTensor> {
    if data.is_empty() {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let cards: Vec<usize> = data.spaces.iter().map(|s| s.cardinality).collect();
    let st = strides(&cards);
    let mut counts = vec![0.0; cards.iter().product()];
    for i in 0..data.len() {
        let idx: usize = data.row(i).iter().zip(&st).map(|(&v, s)| v as usize * s).sum();
        counts[idx] += 1.0;
    }
    ProbTensor::from_weights(data.spaces.clone(), counts)
}
