//! Directed acyclic graphs, d-separation by reachability, proposition
//! certificates and identification-design classification.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A DAG with named nodes and optional role labels (`"Y" -> node name`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawDag", into = "RawDag")]
pub struct Dag {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
    roles: BTreeMap<String, String>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawDag {
    nodes: Vec<String>,
    edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    roles: BTreeMap<String, String>,
}

impl TryFrom<RawDag> for Dag {
    type Error = Error;
    fn try_from(raw: RawDag) -> Result<Self> {
        Dag::new(raw.nodes, raw.edges)?.with_roles(raw.roles)
    }
}

impl From<Dag> for RawDag {
    fn from(d: Dag) -> Self {
        RawDag { nodes: d.nodes, edges: d.edges, roles: d.roles }
    }
}

impl Dag {
    pub fn new<S: Into<String>>(nodes: Vec<S>, edges: Vec<(S, S)>) -> Result<Dag> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let edges: Vec<(String, String)> = edges.into_iter().map(|(a, b)| (a.into(), b.into())).collect();
        for (i, n) in nodes.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::InvalidGraph("empty node name".into()));
            }
            if nodes[..i].contains(n) {
                return Err(Error::InvalidGraph(format!("duplicate node `{n}`")));
            }
        }
        let index = |name: &str| {
            nodes.iter().position(|n| n == name).ok_or_else(|| Error::UnknownNode(name.to_string()))
        };
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, (a, b)) in edges.iter().enumerate() {
            let (pa, ch) = (index(a)?, index(b)?);
            if pa == ch {
                return Err(Error::InvalidGraph(format!("self-loop on `{a}`")));
            }
            if edges[..i].contains(&(a.clone(), b.clone())) {
                return Err(Error::InvalidGraph(format!("duplicate edge {a} -> {b}")));
            }
            parents[ch].push(pa);
            children[pa].push(ch);
        }
        // Kahn's algorithm, smallest index first for a stable order.
        let mut indeg: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut topo = Vec::with_capacity(nodes.len());
        while let Some(n) = ready.pop_first() {
            topo.push(n);
            for &c in &children[n] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if topo.len() != nodes.len() {
            return Err(Error::InvalidGraph("graph has a directed cycle".into()));
        }
        Ok(Dag { nodes, edges, roles: BTreeMap::new(), parents, children, topo })
    }

    /// Attach role labels; each maps a role (`Y`, `X`, ...) to a node.
    pub fn with_roles(mut self, roles: BTreeMap<String, String>) -> Result<Dag> {
        for node in roles.values() {
            self.index(node)?;
        }
        self.roles = roles;
        Ok(self)
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn roles(&self) -> &BTreeMap<String, String> {
        &self.roles
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.nodes.iter().position(|n| n == name).ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn parents_of(&self, name: &str) -> Result<Vec<&str>> {
        Ok(self.parents[self.index(name)?].iter().map(|&p| self.nodes[p].as_str()).collect())
    }

    /// Node indices in topological order.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Node playing `role`: the explicit mapping if present, else a node
    /// literally named after the role.
    pub fn resolve_role(&self, role: &str) -> Option<&str> {
        if let Some(n) = self.roles.get(role) {
            return Some(n.as_str());
        }
        self.nodes.iter().find(|n| n.as_str() == role).map(String::as_str)
    }

    pub fn from_json(s: &str) -> Result<Dag> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// d-separation of `left` and `right` given `given` by Bayes-ball
    /// reachability from `left`.
    pub fn d_separated(&self, q: &CiQuery) -> Result<bool> {
        q.validate()?;
        let idx = |set: &BTreeSet<String>| -> Result<Vec<usize>> { set.iter().map(|n| self.index(n)).collect() };
        let (left, right, given) = (idx(&q.left)?, idx(&q.right)?, idx(&q.given)?);
        let n = self.nodes.len();
        let mut observed = vec![false; n];
        for &g in &given {
            observed[g] = true;
        }
        // Ancestors of the conditioning set (inclusive).
        let mut anc = observed.clone();
        let mut stack = given.clone();
        while let Some(v) = stack.pop() {
            for &p in &self.parents[v] {
                if !anc[p] {
                    anc[p] = true;
                    stack.push(p);
                }
            }
        }
        const UP: usize = 0;
        const DOWN: usize = 1;
        let mut visited = vec![[false; 2]; n];
        let mut reached = vec![false; n];
        let mut queue: VecDeque<(usize, usize)> = left.iter().map(|&l| (l, UP)).collect();
        while let Some((v, dir)) = queue.pop_front() {
            if visited[v][dir] {
                continue;
            }
            visited[v][dir] = true;
            if !observed[v] {
                reached[v] = true;
            }
            if dir == UP && !observed[v] {
                queue.extend(self.parents[v].iter().map(|&p| (p, UP)));
                queue.extend(self.children[v].iter().map(|&c| (c, DOWN)));
            } else if dir == DOWN {
                if !observed[v] {
                    queue.extend(self.children[v].iter().map(|&c| (c, DOWN)));
                }
                if anc[v] {
                    queue.extend(self.parents[v].iter().map(|&p| (p, UP)));
                }
            }
        }
        Ok(!right.iter().any(|&r| reached[r]))
    }

    /// Like [`Dag::d_separated`] but with sets given as role names.
    pub fn d_separated_roles(&self, q: &CiQuery) -> Result<bool> {
        let map = |set: &BTreeSet<String>| -> Result<BTreeSet<String>> {
            set.iter()
                .map(|r| self.resolve_role(r).map(str::to_string).ok_or_else(|| Error::MissingRole(r.clone())))
                .collect()
        };
        self.d_separated(&CiQuery { left: map(&q.left)?, right: map(&q.right)?, given: map(&q.given)? })
    }
}

/// A conditional-independence statement `left ⫫ right | given`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CiQuery {
    pub left: BTreeSet<String>,
    pub right: BTreeSet<String>,
    pub given: BTreeSet<String>,
}

impl CiQuery {
    pub fn new(left: &[&str], right: &[&str], given: &[&str]) -> CiQuery {
        let set = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
        CiQuery { left: set(left), right: set(right), given: set(given) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.left.is_empty() || self.right.is_empty() {
            return Err(Error::InvalidQuery("both sides must be non-empty".into()));
        }
        let overlap = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.intersection(b).next().cloned();
        if let Some(n) = overlap(&self.left, &self.right)
            .or_else(|| overlap(&self.left, &self.given))
            .or_else(|| overlap(&self.right, &self.given))
        {
            return Err(Error::InvalidQuery(format!("`{n}` appears in two sets")));
        }
        Ok(())
    }

    pub fn swapped(&self) -> CiQuery {
        CiQuery { left: self.right.clone(), right: self.left.clone(), given: self.given.clone() }
    }

    fn rename(&self, f: &impl Fn(&str) -> String) -> CiQuery {
        let m = |s: &BTreeSet<String>| s.iter().map(|x| f(x)).collect();
        CiQuery { left: m(&self.left), right: m(&self.right), given: m(&self.given) }
    }
}

impl std::fmt::Display for CiQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let j = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        write!(f, "{} ⫫ {}", j(&self.left), j(&self.right))?;
        if !self.given.is_empty() {
            write!(f, " | {}", j(&self.given))?;
        }
        Ok(())
    }
}

/// Which potential outcome a counterfactual conclusion is about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Intervention {
    /// `Y(x)`: set `X`.
    Treatment,
    /// `Y(x,w)`: set `X` and `W`.
    TreatmentAndConfounder,
}

/// `Y(x) ⫫ right | given` (or `Y(x,w)`), with sets in role names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterfactualQuery {
    pub intervention: Intervention,
    pub right: BTreeSet<String>,
    pub given: BTreeSet<String>,
}

impl std::fmt::Display for CounterfactualQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let j = |s: &BTreeSet<String>| s.iter().cloned().collect::<Vec<_>>().join(",");
        let y = match self.intervention {
            Intervention::Treatment => "Y(x)",
            Intervention::TreatmentAndConfounder => "Y(x,w)",
        };
        write!(f, "{y} ⫫ {}", j(&self.right))?;
        if !self.given.is_empty() {
            write!(f, " | {}", j(&self.given))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Statement {
    Observational(CiQuery),
    Counterfactual(CounterfactualQuery),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conclusion {
    pub label: String,
    pub statement: Statement,
}

/// A proposition: required roles and its list of conclusions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposition {
    pub id: u8,
    pub roles: Vec<&'static str>,
    pub conclusions: Vec<Conclusion>,
}

fn obs(label: &str, l: &[&str], r: &[&str], g: &[&str]) -> Conclusion {
    Conclusion { label: label.into(), statement: Statement::Observational(CiQuery::new(l, r, g)) }
}

fn cf(label: &str, intervention: Intervention, r: &[&str], g: &[&str]) -> Conclusion {
    let set = |s: &[&str]| s.iter().map(|x| x.to_string()).collect();
    Conclusion {
        label: label.into(),
        statement: Statement::Counterfactual(CounterfactualQuery { intervention, right: set(r), given: set(g) }),
    }
}

/// The conditional-independence conclusions of propositions 1 to 7.
pub fn proposition(id: u8) -> Result<Proposition> {
    use Intervention::*;
    let (roles, conclusions) = match id {
        1 => (
            vec!["Y", "X", "W", "V", "Z"],
            vec![
                obs("i", &["Y"], &["V", "Z"], &["W", "X"]),
                obs("ii", &["V"], &["Z"], &["W", "X"]),
                obs("iii", &["Z"], &["X"], &["W"]),
                cf("iv", Treatment, &["X", "V"], &["W"]),
            ],
        ),
        2 => (
            vec!["Y", "X", "W", "V", "Z"],
            vec![
                obs("i", &["V"], &["X", "Z"], &["W"]),
                obs("ii", &["X"], &["Z"], &["W"]),
                obs("iii", &["Y"], &["Z"], &["W", "X"]),
                cf("iv", Treatment, &["X", "Z"], &["W"]),
            ],
        ),
        3 => (
            vec!["Y", "X", "W", "V", "Z"],
            vec![
                obs("i", &["V"], &["X", "Z"], &["W", "Y"]),
                obs("ii", &["X"], &["Z"], &["W", "Y"]),
                obs("iii", &["Y"], &["Z"], &["W"]),
                cf("iv", Treatment, &["X"], &["W"]),
            ],
        ),
        4 => (
            vec!["Y", "X", "W", "V", "Z", "C"],
            vec![
                obs("i", &["C"], &["V", "Z"], &["W", "X"]),
                obs("ii", &["V"], &["Z"], &["W", "X"]),
                obs("iii", &["X"], &["Z"], &["W"]),
                obs("iv", &["Y"], &["Z"], &["W", "V", "X"]),
                cf("v", Treatment, &["X"], &["W", "V"]),
            ],
        ),
        5 => (
            vec!["Y", "X", "W"],
            vec![
                cf("i", TreatmentAndConfounder, &["X", "W"], &[]),
                cf("ii", TreatmentAndConfounder, &["X", "W"], &["V"]),
            ],
        ),
        6 => (
            vec!["Y", "X", "W", "V", "Z"],
            vec![
                obs("i", &["Y"], &["V", "Z"], &["W", "X"]),
                obs("ii", &["V"], &["Z"], &["W", "X"]),
                cf("iii", Treatment, &["X", "V"], &["W"]),
            ],
        ),
        7 => (
            vec!["Y", "X", "W", "V", "Z", "C"],
            vec![
                obs("i", &["C"], &["V", "Z"], &["W", "X"]),
                obs("ii", &["V"], &["Z"], &["W", "X"]),
                obs("iii", &["Y"], &["Z"], &["W", "V", "X"]),
                cf("iv", Treatment, &["X"], &["W", "V"]),
            ],
        ),
        _ => return Err(Error::InvalidInput(format!("no proposition {id}; expected 1..=7"))),
    };
    Ok(Proposition { id, roles, conclusions })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Certified,
    NotCertified,
    VerifiedBySimulationOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConclusionCheck {
    pub label: String,
    pub statement: String,
    pub status: CheckStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub proposition: u8,
    pub conclusions: Vec<ConclusionCheck>,
}

impl CheckReport {
    /// True when every observational conclusion is certified.
    pub fn all_observational_certified(&self) -> bool {
        self.conclusions.iter().all(|c| c.status != CheckStatus::NotCertified)
    }

    pub fn status(&self, label: &str) -> Option<CheckStatus> {
        self.conclusions.iter().find(|c| c.label == label).map(|c| c.status)
    }
}

/// Certify the observational conclusions of a proposition by d-separation.
/// Counterfactual conclusions are left to the structural-model oracle.
pub fn check_proposition(g: &Dag, prop_id: u8) -> Result<CheckReport> {
    let prop = proposition(prop_id)?;
    for r in &prop.roles {
        g.resolve_role(r).ok_or_else(|| Error::MissingRole(r.to_string()))?;
    }
    let mut conclusions = Vec::new();
    for c in &prop.conclusions {
        let (statement, status) = match &c.statement {
            Statement::Observational(q) => {
                let ok = g.d_separated_roles(q)?;
                (q.to_string(), if ok { CheckStatus::Certified } else { CheckStatus::NotCertified })
            }
            Statement::Counterfactual(q) => (q.to_string(), CheckStatus::VerifiedBySimulationOnly),
        };
        conclusions.push(ConclusionCheck { label: c.label.clone(), statement, status });
    }
    Ok(CheckReport { proposition: prop_id, conclusions })
}

/// Identification designs a graph may support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    OutcomeProxy,
    TreatmentProxy,
    CondTreatmentProxy,
    AuxiliaryProxy,
    OutcomeProxyRankInvariance,
    AuxiliaryProxyRankInvariance,
    DoubleProxy,
}

impl Design {
    pub const ALL: [Design; 7] = [
        Design::OutcomeProxy,
        Design::TreatmentProxy,
        Design::CondTreatmentProxy,
        Design::AuxiliaryProxy,
        Design::OutcomeProxyRankInvariance,
        Design::AuxiliaryProxyRankInvariance,
        Design::DoubleProxy,
    ];

    pub fn is_triple_proxy(self) -> bool {
        self != Design::DoubleProxy
    }

    pub fn needs_c(self) -> bool {
        matches!(self, Design::AuxiliaryProxy | Design::AuxiliaryProxyRankInvariance)
    }

    /// Observational prerequisites, in role names.
    pub fn prerequisites(self) -> Vec<CiQuery> {
        let from_prop = |id: u8| -> Vec<CiQuery> {
            proposition(id)
                .expect("builtin proposition")
                .conclusions
                .into_iter()
                .filter_map(|c| match c.statement {
                    Statement::Observational(q) => Some(q),
                    Statement::Counterfactual(_) => None,
                })
                .collect()
        };
        match self {
            Design::OutcomeProxy => from_prop(1),
            Design::TreatmentProxy => from_prop(2),
            Design::CondTreatmentProxy => from_prop(3),
            Design::AuxiliaryProxy => from_prop(4),
            Design::OutcomeProxyRankInvariance => from_prop(6),
            Design::AuxiliaryProxyRankInvariance => from_prop(7),
            // Conclusions ii and iii, plus the observable shadow of iv.
            Design::DoubleProxy => vec![
                CiQuery::new(&["V"], &["Z"], &["W", "X"]),
                CiQuery::new(&["Z"], &["X"], &["W"]),
                CiQuery::new(&["Y"], &["V"], &["W", "X"]),
            ],
        }
    }
}

/// Designs supported by a graph, with one witnessing proxy assignment each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSet {
    pub designs: BTreeMap<Design, BTreeMap<String, String>>,
}

impl DesignSet {
    pub fn contains(&self, d: Design) -> bool {
        self.designs.contains_key(&d)
    }

    pub fn any_triple_proxy(&self) -> bool {
        self.designs.keys().any(|d| d.is_triple_proxy())
    }
}

/// Try every injective assignment of the non-core nodes to the proxy roles
/// `V`, `Z` (and `C` where needed) and report which designs have all
/// observational prerequisites certified.
pub fn classify_designs(g: &Dag) -> Result<DesignSet> {
    let mut core = BTreeMap::new();
    for r in ["Y", "X", "W"] {
        let node = g.resolve_role(r).ok_or_else(|| Error::MissingRole(r.to_string()))?;
        core.insert(r.to_string(), node.to_string());
    }
    let others: Vec<&str> = g
        .nodes()
        .iter()
        .map(String::as_str)
        .filter(|n| !core.values().any(|c| c == n))
        .collect();
    let mut out = DesignSet::default();
    for design in Design::ALL {
        let roles: &[&str] = if design.needs_c() { &["V", "Z", "C"] } else { &["V", "Z"] };
        'assign: for pick in injective_assignments(others.len(), roles.len()) {
            let mut map = core.clone();
            for (r, &i) in roles.iter().zip(&pick) {
                map.insert(r.to_string(), others[i].to_string());
            }
            for q in design.prerequisites() {
                let q = q.rename(&|r: &str| map[r].clone());
                if !g.d_separated(&q)? {
                    continue 'assign;
                }
            }
            out.designs.insert(design, map);
            break;
        }
    }
    Ok(out)
}

fn injective_assignments(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, k, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, k, &mut Vec::new(), &mut out);
    out
}

const CORE: [(&str, &str); 3] = [("X", "Y"), ("W", "X"), ("W", "Y")];

/// Names of the builtin figure graphs.
pub const BUILTIN_FIGURES: [&str; 20] = [
    "fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2b", "fig2c", "fig3a", "fig3b", "fig3c", "fig4a",
    "fig4b", "fig5a", "fig5b", "fig5c", "fig6a", "fig6b", "fig6c", "fig7a", "fig7b",
];

/// Normalize `"2.a"`, `"fig2a"`, `"Fig. 2.a"` to `"fig2a"`.
pub fn canonical_figure_name(name: &str) -> String {
    let compact: String = name.to_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
    let trimmed = compact.trim_start_matches("figure").trim_start_matches("fig");
    format!("fig{trimmed}")
}

/// Edge list (beyond `X→Y`, `W→X`, `W→Y`) of a builtin figure graph.
fn figure_edges(name: &str) -> Option<Vec<(&'static str, &'static str)>> {
    let e: &[(&str, &str)] = match name {
        "fig1a" | "fig2c" => &[("W", "Z"), ("W", "V"), ("X", "V")],
        "fig1b" => &[("W", "Z"), ("W", "V"), ("Z", "X"), ("V", "Y")],
        "fig1c" | "fig4a" => &[("W", "Z"), ("W", "V"), ("Y", "V")],
        "fig1d" | "fig5a" => &[("W", "Z"), ("W", "V"), ("W", "C"), ("V", "Y"), ("C", "Y"), ("V", "X"), ("X", "C")],
        "fig2a" => &[("W", "Z"), ("W", "V"), ("V", "X")],
        "fig2b" => &[("W", "Z"), ("V", "W"), ("V", "X")],
        "fig3a" => &[("W", "Z"), ("W", "V"), ("V", "Y")],
        "fig3b" => &[("Z", "W"), ("W", "V"), ("V", "Y")],
        "fig3c" => &[("W", "Z"), ("V", "W"), ("V", "Y")],
        "fig4b" => &[("Z", "W"), ("W", "V"), ("Y", "V")],
        "fig5b" => &[("W", "Z"), ("V", "W"), ("W", "C"), ("V", "Y"), ("C", "Y"), ("V", "X"), ("X", "C")],
        "fig5c" => &[("Z", "W"), ("W", "V"), ("W", "C"), ("V", "Y"), ("C", "Y"), ("V", "X"), ("X", "C")],
        "fig6a" => &[("W", "Z"), ("W", "V"), ("V", "X"), ("X", "Z")],
        "fig6b" => &[("W", "Z"), ("V", "W"), ("V", "X"), ("X", "Z")],
        "fig6c" => &[("W", "Z"), ("W", "V"), ("X", "V"), ("X", "Z")],
        "fig7a" => &[
            ("W", "Z"), ("W", "V"), ("W", "C"), ("V", "Y"), ("C", "Y"), ("V", "X"), ("X", "C"), ("X", "Z"),
        ],
        "fig7b" => &[
            ("W", "Z"), ("V", "W"), ("W", "C"), ("V", "Y"), ("C", "Y"), ("V", "X"), ("X", "C"), ("X", "Z"),
        ],
        _ => return None,
    };
    Some(e.to_vec())
}

/// A builtin figure graph by name (`"fig2a"`, `"2.a"`, ...). Nodes are named
/// after their roles: `Y`, `X`, `W`, `V`, `Z` and, where present, `C`.
pub fn builtin(name: &str) -> Result<Dag> {
    let key = canonical_figure_name(name);
    let extra = figure_edges(&key).ok_or_else(|| Error::InvalidInput(format!("no builtin graph `{name}`")))?;
    let mut edges: Vec<(&str, &str)> = CORE.to_vec();
    edges.extend(extra);
    let mut nodes = vec!["Y", "X", "W", "V", "Z"];
    if edges.iter().any(|(a, b)| *a == "C" || *b == "C") {
        nodes.push("C");
    }
    Dag::new(nodes, edges)
}


#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> Dag {
        Dag::new(vec!["A", "B", "C"], vec![("A", "B"), ("B", "C")]).unwrap()
    }

    #[test]
    fn chain_blocking() {
        let g = chain();
        assert!(!g.d_separated(&CiQuery::new(&["A"], &["C"], &[])).unwrap());
        assert!(g.d_separated(&CiQuery::new(&["A"], &["C"], &["B"])).unwrap());
    }

    #[test]
    fn collider_opens_when_descendant_observed() {
        let g = Dag::new(vec!["A", "B", "C", "D"], vec![("A", "C"), ("B", "C"), ("C", "D")]).unwrap();
        assert!(g.d_separated(&CiQuery::new(&["A"], &["B"], &[])).unwrap());
        assert!(!g.d_separated(&CiQuery::new(&["A"], &["B"], &["C"])).unwrap());
        assert!(!g.d_separated(&CiQuery::new(&["A"], &["B"], &["D"])).unwrap());
    }

    #[test]
    fn fig2a_proposition_one_queries() {
        let g = builtin("2.a").unwrap();
        assert!(g.d_separated(&CiQuery::new(&["Y"], &["V", "Z"], &["W", "X"])).unwrap());
        assert!(g.d_separated(&CiQuery::new(&["Z"], &["X"], &["W"])).unwrap());
    }

    #[test]
    fn cycles_and_unknown_nodes_rejected() {
        assert!(matches!(
            Dag::new(vec!["A", "B"], vec![("A", "B"), ("B", "A")]),
            Err(Error::InvalidGraph(_))
        ));
        assert!(matches!(Dag::new(vec!["A"], vec![("A", "Q")]), Err(Error::UnknownNode(_))));
        assert!(matches!(chain().d_separated(&CiQuery::new(&["A"], &["Q"], &[])), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn overlapping_query_rejected() {
        assert!(matches!(
            chain().d_separated(&CiQuery::new(&["A"], &["C"], &["A"])),
            Err(Error::InvalidQuery(_))
        ));
    }

    #[test]
    fn fig3a_certifies_proposition_two() {
        let r = check_proposition(&builtin("fig3a").unwrap(), 2).unwrap();
        for l in ["i", "ii", "iii"] {
            assert_eq!(r.status(l), Some(CheckStatus::Certified));
        }
        assert_eq!(r.status("iv"), Some(CheckStatus::VerifiedBySimulationOnly));
    }

    #[test]
    fn fig1b_fails_proposition_one() {
        let r = check_proposition(&builtin("fig1b").unwrap(), 1).unwrap();
        assert_eq!(r.status("i"), Some(CheckStatus::NotCertified));
        assert_eq!(r.status("iii"), Some(CheckStatus::NotCertified));
        assert!(!r.all_observational_certified());
    }

    #[test]
    fn disconnected_graph_certifies_everything() {
        let g = Dag::new(vec!["Y", "X", "W", "V", "Z", "C"], Vec::<(&str, &str)>::new()).unwrap();
        for p in 1..=7 {
            assert!(check_proposition(&g, p).unwrap().all_observational_certified());
        }
    }

    #[test]
    fn missing_role_reported() {
        let g = builtin("fig2a").unwrap();
        assert!(matches!(check_proposition(&g, 4), Err(Error::MissingRole(r)) if r == "C"));
    }

    #[test]
    fn figure_one_classification() {
        let a = classify_designs(&builtin("fig1a").unwrap()).unwrap();
        assert!(a.contains(Design::DoubleProxy) && a.any_triple_proxy());
        let b = classify_designs(&builtin("fig1b").unwrap()).unwrap();
        assert!(b.contains(Design::DoubleProxy) && !b.any_triple_proxy());
        let c = classify_designs(&builtin("fig1c").unwrap()).unwrap();
        assert!(!c.contains(Design::DoubleProxy) && c.any_triple_proxy());
        let d = classify_designs(&builtin("fig1d").unwrap()).unwrap();
        assert!(!d.contains(Design::DoubleProxy) && d.contains(Design::AuxiliaryProxy));
    }

    #[test]
    fn roles_remap_node_names() {
        let json = r#"{"nodes":["gpa","tutor","ability","early","late"],
            "edges":[["tutor","gpa"],["ability","tutor"],["ability","gpa"],["ability","early"],["ability","late"],["early","tutor"]],
            "roles":{"Y":"gpa","X":"tutor","W":"ability","V":"early","Z":"late"}}"#;
        let g = Dag::from_json(json).unwrap();
        assert!(check_proposition(&g, 1).unwrap().all_observational_certified());
        let back = Dag::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn figure_names_normalize() {
        assert_eq!(canonical_figure_name("Fig. 2.a"), "fig2a");
        assert_eq!(canonical_figure_name("5.c"), "fig5c");
        assert!(BUILTIN_FIGURES.iter().all(|n| builtin(n).is_ok()));
    }
}
