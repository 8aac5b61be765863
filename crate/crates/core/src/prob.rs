//! Finite-support probability objects.
//!
//! [`ProbTensor`] is a dense joint pmf over an ordered tuple of named
//! categorical variables and [`MarkovKernel`] a conditional pmf. Values are
//! stored row-major (last axis fastest). All operations are pure.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{assumptions, Error, Result};

/// Entries in `(-CLIP_EPS, 0)` are treated as round-off and clipped to zero.
pub const CLIP_EPS: f64 = 1e-12;
/// Tolerance on total mass (and on kernel column sums).
pub const MASS_TOL: f64 = 1e-10;

/// A named categorical variable with optional numeric level values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpace {
    pub name: String,
    pub cardinality: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<f64>>,
}

impl VarSpace {
    pub fn new(name: impl Into<String>, cardinality: usize) -> Self {
        VarSpace { name: name.into(), cardinality, levels: None }
    }

    /// Variable whose numeric levels are `0, 1, ..., cardinality - 1`.
    pub fn indexed(name: impl Into<String>, cardinality: usize) -> Self {
        VarSpace {
            name: name.into(),
            cardinality,
            levels: Some((0..cardinality).map(|i| i as f64).collect()),
        }
    }

    pub fn with_levels(name: impl Into<String>, levels: Vec<f64>) -> Self {
        VarSpace { name: name.into(), cardinality: levels.len(), levels: Some(levels) }
    }

    pub fn renamed(&self, name: impl Into<String>) -> Self {
        VarSpace { name: name.into(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidSpace("empty variable name".into()));
        }
        if self.cardinality == 0 {
            return Err(Error::InvalidSpace(format!("`{}` has cardinality 0", self.name)));
        }
        if let Some(levels) = &self.levels {
            if levels.len() != self.cardinality {
                return Err(Error::InvalidSpace(format!(
                    "`{}` declares {} levels for cardinality {}",
                    self.name,
                    levels.len(),
                    self.cardinality
                )));
            }
            if levels.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSpace(format!("`{}` has non-finite levels", self.name)));
            }
        }
        Ok(())
    }

    /// Numeric levels, or `MissingLevels`.
    pub fn numeric_levels(&self) -> Result<&[f64]> {
        self.levels.as_deref().ok_or_else(|| Error::MissingLevels(self.name.clone()))
    }
}

pub(crate) fn strides(cards: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; cards.len()];
    for d in (0..cards.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * cards[d + 1];
    }
    strides
}

/// Visit every multi-index of a row-major array, in flat order.
pub(crate) fn for_each_index(cards: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = cards.iter().product();
    let mut idx = vec![0usize; cards.len()];
    for _ in 0..total {
        f(&idx);
        for d in (0..cards.len()).rev() {
            idx[d] += 1;
            if idx[d] < cards[d] {
                break;
            }
            idx[d] = 0;
        }
    }
}

fn check_unique(spaces: &[VarSpace]) -> Result<()> {
    for (i, a) in spaces.iter().enumerate() {
        a.validate()?;
        if spaces[..i].iter().any(|b| b.name == a.name) {
            return Err(Error::DuplicateAxis(a.name.clone()));
        }
    }
    Ok(())
}

/// Clip round-off negatives. Returns whether anything was clipped.
fn clip_negatives(values: &mut [f64]) -> Result<bool> {
    let mut clipped = false;
    for (index, v) in values.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite probability at flat index {index}")));
        }
        if *v < 0.0 {
            if *v <= -CLIP_EPS {
                return Err(Error::NegativeEntry { index, value: *v });
            }
            *v = 0.0;
            clipped = true;
        }
    }
    Ok(clipped)
}

fn describe_cell(spaces: &[VarSpace], idx: &[usize]) -> String {
    let parts: Vec<String> =
        spaces.iter().zip(idx).map(|(s, i)| format!("{}={}", s.name, i)).collect();
    format!("({})", parts.join(", "))
}

/// Exact joint pmf over an ordered tuple of categorical variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct ProbTensor {
    axes: Vec<VarSpace>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    axes: Vec<VarSpace>,
    values: Vec<f64>,
}

impl TryFrom<RawTensor> for ProbTensor {
    type Error = Error;
    fn try_from(raw: RawTensor) -> Result<Self> {
        ProbTensor::new(raw.axes, raw.values)
    }
}

impl ProbTensor {
    /// Validate a pmf. Round-off negatives are clipped (and the tensor
    /// renormalized); otherwise values are kept bit-for-bit.
    pub fn new(axes: Vec<VarSpace>, mut values: Vec<f64>) -> Result<Self> {
        check_unique(&axes)?;
        let expected: usize = axes.iter().map(|a| a.cardinality).product();
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: values.len() });
        }
        let clipped = clip_negatives(&mut values)?;
        let total: f64 = values.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::MassMismatch { total });
        }
        if clipped {
            values.iter_mut().for_each(|v| *v /= total);
        }
        Ok(ProbTensor { axes, values })
    }

    /// Normalize non-negative weights into a pmf.
    pub fn from_weights(axes: Vec<VarSpace>, mut values: Vec<f64>) -> Result<Self> {
        check_unique(&axes)?;
        let expected: usize = axes.iter().map(|a| a.cardinality).product();
        if values.len() != expected {
            return Err(Error::ShapeMismatch { expected, found: values.len() });
        }
        clip_negatives(&mut values)?;
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::MassMismatch { total });
        }
        values.iter_mut().for_each(|v| *v /= total);
        Ok(ProbTensor { axes, values })
    }

    pub fn uniform(axes: Vec<VarSpace>) -> Result<Self> {
        let n: usize = axes.iter().map(|a| a.cardinality).product();
        ProbTensor::from_weights(axes, vec![1.0; n])
    }

    pub fn axes(&self) -> &[VarSpace] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.cardinality).collect()
    }

    pub fn axis_names(&self) -> Vec<&str> {
        self.axes.iter().map(|a| a.name.as_str()).collect()
    }

    pub fn axis_index(&self, name: &str) -> Result<usize> {
        self.axes
            .iter()
            .position(|a| a.name == name)
            .ok_or_else(|| Error::UnknownAxis(name.to_string()))
    }

    pub fn axis(&self, name: &str) -> Result<&VarSpace> {
        Ok(&self.axes[self.axis_index(name)?])
    }

    pub fn has_axis(&self, name: &str) -> bool {
        self.axes.iter().any(|a| a.name == name)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        let strides = strides(&self.shape());
        self.values[idx.iter().zip(&strides).map(|(i, s)| i * s).sum::<usize>()]
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum the tensor onto the axes `keep` (in that order).
    fn reduce(&self, keep: &[usize]) -> Vec<f64> {
        let shape = self.shape();
        let out_cards: Vec<usize> = keep.iter().map(|&k| shape[k]).collect();
        let out_strides = strides(&out_cards);
        let mut out = vec![0.0; out_cards.iter().product()];
        let mut flat = 0;
        for_each_index(&shape, |idx| {
            let o: usize = keep.iter().zip(&out_strides).map(|(&k, s)| idx[k] * s).sum();
            out[o] += self.values[flat];
            flat += 1;
        });
        out
    }

    fn indices_of(&self, names: &[&str]) -> Result<Vec<usize>> {
        let mut seen = Vec::with_capacity(names.len());
        for n in names {
            let i = self.axis_index(n)?;
            if seen.contains(&i) {
                return Err(Error::DuplicateAxis(n.to_string()));
            }
            seen.push(i);
        }
        Ok(seen)
    }

    /// Sum out the axes in `drop`.
    pub fn marginalize(&self, drop: &[&str]) -> Result<ProbTensor> {
        let dropped = self.indices_of(drop)?;
        let keep: Vec<usize> = (0..self.axes.len()).filter(|i| !dropped.contains(i)).collect();
        Ok(ProbTensor {
            axes: keep.iter().map(|&k| self.axes[k].clone()).collect(),
            values: self.reduce(&keep),
        })
    }

    /// Marginal over `keep`, with axes in the order given.
    pub fn marginal(&self, keep: &[&str]) -> Result<ProbTensor> {
        let keep = self.indices_of(keep)?;
        Ok(ProbTensor {
            axes: keep.iter().map(|&k| self.axes[k].clone()).collect(),
            values: self.reduce(&keep),
        })
    }

    /// Reorder axes. `order` must name every axis exactly once.
    pub fn permute_axes(&self, order: &[&str]) -> Result<ProbTensor> {
        if order.len() != self.axes.len() {
            return Err(Error::AxisMismatch(format!(
                "permutation names {} axes, tensor has {}",
                order.len(),
                self.axes.len()
            )));
        }
        self.marginal(order)
    }

    /// Relabel the levels of one axis: new level `j` is old level `perm[j]`.
    pub fn permute_levels(&self, axis: &str, perm: &[usize]) -> Result<ProbTensor> {
        let a = self.axis_index(axis)?;
        check_permutation(perm, self.axes[a].cardinality)?;
        let shape = self.shape();
        let st = strides(&shape);
        let mut values = vec![0.0; self.values.len()];
        let mut flat = 0;
        for_each_index(&shape, |idx| {
            let src: usize =
                idx.iter().enumerate().map(|(d, &i)| if d == a { perm[i] } else { i } * st[d]).sum();
            values[flat] = self.values[src];
            flat += 1;
        });
        let mut axes = self.axes.clone();
        if let Some(levels) = &self.axes[a].levels {
            axes[a].levels = Some(perm.iter().map(|&p| levels[p]).collect());
        }
        Ok(ProbTensor { axes, values })
    }

    /// Conditional pmf of the remaining axes given `on`.
    pub fn condition(&self, on: &[&str]) -> Result<MarkovKernel> {
        let given_idx = self.indices_of(on)?;
        let target_idx: Vec<usize> =
            (0..self.axes.len()).filter(|i| !given_idx.contains(i)).collect();
        let mut order = target_idx.clone();
        order.extend(&given_idx);
        let names: Vec<&str> = order.iter().map(|&i| self.axes[i].name.as_str()).collect();
        let arranged = self.marginal(&names)?;
        let given: Vec<VarSpace> = given_idx.iter().map(|&i| self.axes[i].clone()).collect();
        let targets: Vec<VarSpace> = target_idx.iter().map(|&i| self.axes[i].clone()).collect();
        let g: usize = given.iter().map(|s| s.cardinality).product();
        let t: usize = targets.iter().map(|s| s.cardinality).product();
        let mut denom = vec![0.0; g];
        for (flat, v) in arranged.values.iter().enumerate() {
            denom[flat % g] += v;
        }
        let given_cards: Vec<usize> = given.iter().map(|s| s.cardinality).collect();
        let mut bad = None;
        let mut col = 0;
        for_each_index(&given_cards, |idx| {
            if bad.is_none() && !(denom[col] > 0.0) {
                bad = Some(describe_cell(&given, idx));
            }
            col += 1;
        });
        if let Some(cell) = bad {
            return Err(Error::ZeroConditioningCell { cell, assumption: assumptions::HS_POSITIVITY });
        }
        let mut values = arranged.values;
        for r in 0..t {
            for c in 0..g {
                values[r * g + c] /= denom[c];
            }
        }
        Ok(MarkovKernel { targets, given, values })
    }

    /// Conditional pmf of the other axes given `axis = level`.
    pub fn slice(&self, axis: &str, level: usize) -> Result<ProbTensor> {
        let a = self.axis_index(axis)?;
        if level >= self.axes[a].cardinality {
            return Err(Error::InvalidInput(format!("level {level} out of range for `{axis}`")));
        }
        let shape = self.shape();
        let mut values = Vec::with_capacity(self.values.len() / shape[a]);
        let mut flat = 0;
        for_each_index(&shape, |idx| {
            if idx[a] == level {
                values.push(self.values[flat]);
            }
            flat += 1;
        });
        let total: f64 = values.iter().sum();
        if !(total > 0.0) {
            return Err(Error::ZeroConditioningCell {
                cell: format!("({axis}={level})"),
                assumption: assumptions::HS_POSITIVITY,
            });
        }
        values.iter_mut().for_each(|v| *v /= total);
        let axes = self.axes.iter().enumerate().filter(|(d, _)| *d != a).map(|(_, s)| s.clone()).collect();
        Ok(ProbTensor { axes, values })
    }

    /// Probability of the event `axis = level`.
    pub fn level_mass(&self, axis: &str, level: usize) -> Result<f64> {
        Ok(self.marginal(&[axis])?.values[level])
    }

    /// Outer product with an independent tensor.
    pub fn product(&self, other: &ProbTensor) -> Result<ProbTensor> {
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().cloned());
        check_unique(&axes)?;
        let mut values = Vec::with_capacity(self.values.len() * other.values.len());
        for a in &self.values {
            for b in &other.values {
                values.push(a * b);
            }
        }
        Ok(ProbTensor { axes, values })
    }

    /// Expected numeric level of one axis.
    pub fn mean(&self, axis: &str) -> Result<f64> {
        let levels = self.axis(axis)?.numeric_levels()?.to_vec();
        let m = self.marginal(&[axis])?;
        Ok(m.values.iter().zip(&levels).map(|(p, l)| p * l).sum())
    }

    /// Largest violation of `f(L,R,G) f(G) = f(L,G) f(R,G)` over all cells.
    pub fn ci_discrepancy(&self, left: &[&str], right: &[&str], given: &[&str]) -> Result<f64> {
        let mut all: Vec<&str> = left.to_vec();
        all.extend(right);
        all.extend(given);
        let joint = self.marginal(&all)?;
        let mut lg: Vec<&str> = left.to_vec();
        lg.extend(given);
        let mut rg: Vec<&str> = right.to_vec();
        rg.extend(given);
        let f_lg = joint.marginal(&lg)?;
        let f_rg = joint.marginal(&rg)?;
        let f_g = joint.marginal(given)?;
        let card = |names: &[&str]| -> usize {
            names.iter().map(|n| joint.axis(n).map(|a| a.cardinality).unwrap_or(1)).product()
        };
        let (nl, nr, ng) = (card(left), card(right), card(given));
        let mut worst = 0.0f64;
        for l in 0..nl {
            for r in 0..nr {
                for g in 0..ng {
                    let lhs = joint.values[(l * nr + r) * ng + g] * f_g.values[g];
                    let rhs = f_lg.values[l * ng + g] * f_rg.values[r * ng + g];
                    worst = worst.max((lhs - rhs).abs());
                }
            }
        }
        Ok(worst)
    }

    pub fn is_conditionally_independent(
        &self,
        left: &[&str],
        right: &[&str],
        given: &[&str],
        tol: f64,
    ) -> Result<bool> {
        Ok(self.ci_discrepancy(left, right, given)? <= tol)
    }

    /// Max absolute entrywise difference; axes must agree by name and order.
    pub fn max_abs_diff(&self, other: &ProbTensor) -> Result<f64> {
        if self.axis_names() != other.axis_names() || self.shape() != other.shape() {
            return Err(Error::AxisMismatch("tensors have different axes".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// Rename an axis.
    pub fn rename_axis(&self, from: &str, to: &str) -> Result<ProbTensor> {
        let a = self.axis_index(from)?;
        let mut axes = self.axes.clone();
        axes[a].name = to.to_string();
        check_unique(&axes)?;
        Ok(ProbTensor { axes, values: self.values.clone() })
    }

    /// Replace the metadata of one axis (same cardinality).
    pub fn with_axis_space(&self, space: VarSpace) -> Result<ProbTensor> {
        let a = self.axis_index(&space.name)?;
        if space.cardinality != self.axes[a].cardinality {
            return Err(Error::AxisMismatch(format!("cardinality change on `{}`", space.name)));
        }
        space.validate()?;
        let mut axes = self.axes.clone();
        axes[a] = space;
        Ok(ProbTensor { axes, values: self.values.clone() })
    }

    /// Matrix view of a two-axis marginal: rows `row`, columns `col`.
    pub fn matrix(&self, row: &str, col: &str) -> Result<DMatrix<f64>> {
        let m = self.marginal(&[row, col])?;
        let (r, c) = (m.axes[0].cardinality, m.axes[1].cardinality);
        Ok(DMatrix::from_row_slice(r, c, &m.values))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<ProbTensor> {
        Ok(serde_json::from_str(s)?)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::InvalidInput(format!("permutation of length {} for {n} levels", perm.len())));
    }
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::InvalidInput(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Conditional pmf of `targets` given `given`. Values are row-major over
/// `targets ++ given`, so with one target and one conditioner the array is a
/// column-stochastic matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovKernel {
    targets: Vec<VarSpace>,
    given: Vec<VarSpace>,
    values: Vec<f64>,
}

impl MarkovKernel {
    pub fn new(targets: Vec<VarSpace>, given: Vec<VarSpace>, mut values: Vec<f64>) -> Result<Self> {
        let mut all = targets.clone();
        all.extend(given.iter().cloned());
        check_unique(&all)?;
        if targets.is_empty() {
            return Err(Error::InvalidInput("kernel needs a target".into()));
        }
        let t: usize = targets.iter().map(|s| s.cardinality).product();
        let g: usize = given.iter().map(|s| s.cardinality).product();
        if values.len() != t * g {
            return Err(Error::ShapeMismatch { expected: t * g, found: values.len() });
        }
        clip_negatives(&mut values)?;
        for c in 0..g {
            let s: f64 = (0..t).map(|r| values[r * g + c]).sum();
            if (s - 1.0).abs() > MASS_TOL {
                return Err(Error::MassMismatch { total: s });
            }
        }
        if values.iter().any(|&v| v > 1.0 + MASS_TOL) {
            return Err(Error::InvalidInput("kernel entry exceeds 1".into()));
        }
        Ok(MarkovKernel { targets, given, values })
    }

    /// Build from a column-stochastic matrix (rows: target configurations,
    /// columns: conditioner configurations), normalizing each column.
    pub fn from_matrix(target: VarSpace, given: Vec<VarSpace>, m: &DMatrix<f64>) -> Result<Self> {
        let g: usize = given.iter().map(|s| s.cardinality).product();
        if m.nrows() != target.cardinality || m.ncols() != g {
            return Err(Error::ShapeMismatch { expected: target.cardinality * g, found: m.len() });
        }
        let mut values = vec![0.0; m.len()];
        for c in 0..g {
            let s: f64 = m.column(c).iter().sum();
            if !(s > 0.0) {
                return Err(Error::MassMismatch { total: s });
            }
            for r in 0..m.nrows() {
                values[r * g + c] = m[(r, c)] / s;
            }
        }
        MarkovKernel::new(vec![target], given, values)
    }

    /// Deterministic copy kernel `target = given` (equal cardinalities).
    pub fn identity(target: VarSpace, given: VarSpace) -> Result<Self> {
        if target.cardinality != given.cardinality {
            return Err(Error::AxisMismatch("identity kernel needs equal cardinalities".into()));
        }
        let n = target.cardinality;
        let m = DMatrix::<f64>::identity(n, n);
        MarkovKernel::from_matrix(target, vec![given], &m)
    }

    pub fn targets(&self) -> &[VarSpace] {
        &self.targets
    }

    pub fn target(&self) -> &VarSpace {
        &self.targets[0]
    }

    pub fn given(&self) -> &[VarSpace] {
        &self.given
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn target_configs(&self) -> usize {
        self.targets.iter().map(|s| s.cardinality).product()
    }

    pub fn given_configs(&self) -> usize {
        self.given.iter().map(|s| s.cardinality).product()
    }

    /// `P(target config = t | given config = g)` by flat configuration index.
    pub fn prob(&self, t: usize, g: usize) -> f64 {
        self.values[t * self.given_configs() + g]
    }

    pub fn column(&self, g: usize) -> Vec<f64> {
        let gc = self.given_configs();
        (0..self.target_configs()).map(|t| self.values[t * gc + g]).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.target_configs(), self.given_configs(), &self.values)
    }

    fn all_spaces(&self) -> Vec<VarSpace> {
        let mut all = self.targets.clone();
        all.extend(self.given.iter().cloned());
        all
    }

    /// Relabel levels of a target or conditioning axis (new `j` = old `perm[j]`).
    pub fn permute_levels(&self, axis: &str, perm: &[usize]) -> Result<MarkovKernel> {
        let as_tensor = ProbTensor { axes: self.all_spaces(), values: self.values.clone() };
        let permuted = as_tensor.permute_levels(axis, perm)?;
        let nt = self.targets.len();
        Ok(MarkovKernel {
            targets: permuted.axes[..nt].to_vec(),
            given: permuted.axes[nt..].to_vec(),
            values: permuted.values,
        })
    }

    /// Replace a conditioning or target axis's metadata (same cardinality).
    pub fn with_space(&self, space: VarSpace) -> Result<MarkovKernel> {
        let mut k = self.clone();
        let slot = k
            .targets
            .iter_mut()
            .chain(k.given.iter_mut())
            .find(|s| s.name == space.name)
            .ok_or_else(|| Error::UnknownAxis(space.name.clone()))?;
        if slot.cardinality != space.cardinality {
            return Err(Error::AxisMismatch(format!("cardinality change on `{}`", space.name)));
        }
        *slot = space;
        Ok(k)
    }

    /// Joint `k(targets | given) * m(axes)` over `targets ++ m.axes`.
    pub fn kernel_product(&self, m: &ProbTensor) -> Result<ProbTensor> {
        for t in &self.targets {
            if m.has_axis(&t.name) {
                return Err(Error::AxisMismatch(format!("target `{}` already in tensor", t.name)));
            }
        }
        let mut given_pos = Vec::with_capacity(self.given.len());
        for g in &self.given {
            let i = m
                .axis_index(&g.name)
                .map_err(|_| Error::AxisMismatch(format!("conditioner `{}` not in tensor", g.name)))?;
            if m.axes[i].cardinality != g.cardinality {
                return Err(Error::AxisMismatch(format!("cardinality of `{}` differs", g.name)));
            }
            given_pos.push(i);
        }
        let given_cards: Vec<usize> = self.given.iter().map(|s| s.cardinality).collect();
        let gst = strides(&given_cards);
        let gc = self.given_configs();
        let m_shape = m.shape();
        let mut given_of_m = Vec::with_capacity(m.values.len());
        for_each_index(&m_shape, |idx| {
            given_of_m.push(given_pos.iter().zip(&gst).map(|(&p, s)| idx[p] * s).sum::<usize>());
        });
        let mut values = Vec::with_capacity(self.target_configs() * m.values.len());
        for t in 0..self.target_configs() {
            for (flat, &mv) in m.values.iter().enumerate() {
                values.push(self.values[t * gc + given_of_m[flat]] * mv);
            }
        }
        let mut axes = self.targets.clone();
        axes.extend(m.axes.iter().cloned());
        Ok(ProbTensor { axes, values })
    }

    /// Largest absolute difference to another kernel over the same spaces.
    pub fn max_abs_diff(&self, other: &MarkovKernel) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::AxisMismatch("kernels have different shapes".into()));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// Project a non-negative-ish vector onto the probability simplex by
/// clipping negatives and renormalizing. Returns the max abs change and the
/// clipped negative mass.
pub(crate) fn project_to_simplex(v: &mut [f64]) -> (f64, f64) {
    let before = v.to_vec();
    let mut clipped = 0.0;
    for x in v.iter_mut() {
        if *x < 0.0 {
            clipped += -*x;
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        let n = v.len() as f64;
        v.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    let dist = v.iter().zip(&before).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    (dist, clipped)
}
