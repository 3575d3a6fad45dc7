//! Network descriptions and their reduction to a grounded susceptance Laplacian.
//!
//! A network is a set of nodes (inverter terminals, interior buses and exactly
//! one infinite bus) joined by series branches. Only branch reactances enter
//! the susceptance matrix: each branch contributes `1/x` to the diagonal of its
//! endpoints and `-1/x` to the off-diagonal pair. The infinite bus is grounded
//! by deleting its row and column, and interior buses are Kron-eliminated so
//! that the result only couples inverter terminals.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reactances below this are treated as degenerate input.
pub const MIN_REACTANCE_PU: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-12;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Inverter,
    Interior,
    Infinite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub role: NodeRole,
}

fn default_scalable() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Whether the line-length factor `k` applies to this branch.
    #[serde(default = "default_scalable")]
    pub scalable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseValues {
    pub u_base_kv: f64,
    pub s_base_mva: f64,
    pub f_base_hz: f64,
}

impl Default for BaseValues {
    fn default() -> Self {
        Self {
            u_base_kv: 0.69,
            s_base_mva: 1.5,
            f_base_hz: 50.0,
        }
    }
}

/// A validated network description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    #[serde(default)]
    pub base: BaseValues,
    /// Dimensionless line-length scaling factor.
    pub k: f64,
    pub nodes: Vec<Node>,
    pub branches: Vec<Branch>,
}

impl NetworkSpec {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: NetworkSpec = serde_json::from_str(text).map_err(|source| Error::Parse {
            what: "network description".into(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every structural invariant, naming the offending field on failure.
    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(Error::schema("k", format!("must be finite and > 0, got {}", self.k)));
        }
        let b = &self.base;
        for (name, v) in [
            ("base.u_base_kv", b.u_base_kv),
            ("base.s_base_mva", b.s_base_mva),
            ("base.f_base_hz", b.f_base_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::schema(name, format!("must be finite and > 0, got {v}")));
            }
        }

        let mut seen = HashSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if !seen.insert(n.id) {
                return Err(Error::schema(
                    format!("nodes[{i}].id"),
                    format!("duplicate node id {}", n.id),
                ));
            }
        }
        let infinite = self.nodes.iter().filter(|n| n.role == NodeRole::Infinite).count();
        if infinite != 1 {
            return Err(Error::schema(
                "nodes[].role",
                format!("exactly one infinite node required, found {infinite}"),
            ));
        }
        if !self.nodes.iter().any(|n| n.role == NodeRole::Inverter) {
            return Err(Error::schema("nodes[].role", "at least one inverter node required"));
        }

        for (i, br) in self.branches.iter().enumerate() {
            for (end, id) in [("from", br.from), ("to", br.to)] {
                if !seen.contains(&id) {
                    return Err(Error::schema(
                        format!("branches[{i}].{end}"),
                        format!("unknown node id {id}"),
                    ));
                }
            }
            if br.from == br.to {
                return Err(Error::schema(
                    format!("branches[{i}]"),
                    format!("self-loop on node {}", br.from),
                ));
            }
            if !(br.x_pu.is_finite() && br.x_pu >= MIN_REACTANCE_PU) {
                return Err(Error::schema(
                    format!("branches[{i}].x_pu"),
                    format!("reactance must be >= {MIN_REACTANCE_PU:e}, got {}", br.x_pu),
                ));
            }
            if !br.r_pu.is_finite() {
                return Err(Error::schema(format!("branches[{i}].r_pu"), "must be finite"));
            }
        }

        let unreachable = self.unreachable_from_infinite();
        if !unreachable.is_empty() {
            return Err(Error::Disconnected { unreachable });
        }
        Ok(())
    }

    fn unreachable_from_infinite(&self) -> Vec<u32> {
        let mut adj: HashMap<u32, Vec<u32>> = HashMap::new();
        for br in &self.branches {
            adj.entry(br.from).or_default().push(br.to);
            adj.entry(br.to).or_default().push(br.from);
        }
        let root = self
            .nodes
            .iter()
            .find(|n| n.role == NodeRole::Infinite)
            .map(|n| n.id);
        let mut visited = HashSet::new();
        let mut queue: VecDeque<u32> = root.into_iter().collect();
        while let Some(id) = queue.pop_front() {
            if visited.insert(id) {
                if let Some(next) = adj.get(&id) {
                    queue.extend(next.iter().copied().filter(|n| !visited.contains(n)));
                }
            }
        }
        self.nodes
            .iter()
            .map(|n| n.id)
            .filter(|id| !visited.contains(id))
            .collect()
    }

    pub fn inverter_ids(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.role == NodeRole::Inverter)
            .map(|n| n.id)
            .collect()
    }

    /// Returns a copy with a different scaling factor.
    pub fn with_k(&self, k: f64) -> Self {
        Self { k, ..self.clone() }
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    NetworkSpec::from_json_str(&text).map_err(|e| e.context(path.display().to_string()))
}

/// Folds the line-length factor into the scalable branches and resets `k` to 1.
pub fn apply_scaling(spec: &NetworkSpec) -> NetworkSpec {
    let k = spec.k;
    let branches = spec
        .branches
        .iter()
        .map(|br| {
            if br.scalable {
                Branch {
                    r_pu: br.r_pu * k,
                    x_pu: br.x_pu * k,
                    ..br.clone()
                }
            } else {
                br.clone()
            }
        })
        .collect();
    NetworkSpec {
        k: 1.0,
        branches,
        ..spec.clone()
    }
}

/// Nodal susceptance matrix over every non-infinite node, in file order.
#[derive(Clone, Debug)]
pub struct FullLaplacian {
    pub matrix: DMatrix<f64>,
    pub node_ids: Vec<u32>,
    pub roles: Vec<NodeRole>,
}

impl FullLaplacian {
    pub fn interior_indices(&self) -> Vec<usize> {
        self.indices_with(NodeRole::Interior)
    }

    pub fn inverter_indices(&self) -> Vec<usize> {
        self.indices_with(NodeRole::Inverter)
    }

    fn indices_with(&self, role: NodeRole) -> Vec<usize> {
        self.roles
            .iter()
            .enumerate()
            .filter(|(_, r)| **r == role)
            .map(|(i, _)| i)
            .collect()
    }

    /// Kron-eliminates the interior nodes; rows of the result follow inverter file order.
    pub fn reduce(&self) -> Result<GroundedLaplacian> {
        let reduced = kron_reduce(&self.matrix, &self.interior_indices())?;
        let ids = self
            .inverter_indices()
            .into_iter()
            .map(|i| self.node_ids[i])
            .collect();
        GroundedLaplacian::new(reduced.b, ids)
    }
}

/// Assembles the grounded nodal susceptance matrix. Resistance is ignored and
/// the scaling factor must already have been applied.
pub fn build_full_laplacian(spec: &NetworkSpec) -> Result<FullLaplacian> {
    let kept: Vec<&Node> = spec
        .nodes
        .iter()
        .filter(|n| n.role != NodeRole::Infinite)
        .collect();
    let index: HashMap<u32, usize> = kept.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let m = kept.len();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for br in &spec.branches {
        let y = 1.0 / br.x_pu;
        let from = index.get(&br.from).copied();
        let to = index.get(&br.to).copied();
        if let Some(i) = from {
            a[(i, i)] += y;
        }
        if let Some(j) = to {
            a[(j, j)] += y;
        }
        if let (Some(i), Some(j)) = (from, to) {
            a[(i, j)] -= y;
            a[(j, i)] -= y;
        }
    }
    if m > 0 && a.clone().cholesky().is_none() {
        return Err(Error::NotGroundedLaplacian(
            "full susceptance matrix is singular; the network invariants must have been violated"
                .into(),
        ));
    }
    Ok(FullLaplacian {
        matrix: a,
        node_ids: kept.iter().map(|n| n.id).collect(),
        roles: kept.iter().map(|n| n.role).collect(),
    })
}

/// Classical Kron reduction: eliminates `interior_idx` one pivot at a time.
///
/// The returned Laplacian keeps the remaining indices in ascending order and
/// uses those indices as its node labels.
pub fn kron_reduce(full: &DMatrix<f64>, interior_idx: &[usize]) -> Result<GroundedLaplacian> {
    let m = full.nrows();
    if full.ncols() != m {
        return Err(Error::Precondition("Kron reduction needs a square matrix".into()));
    }
    let mut eliminate: Vec<usize> = interior_idx.to_vec();
    eliminate.sort_unstable();
    eliminate.dedup();
    if let Some(&bad) = eliminate.iter().find(|&&i| i >= m) {
        return Err(Error::Precondition(format!("index {bad} out of range for {m}x{m} matrix")));
    }

    let scale = full.amax().max(f64::MIN_POSITIVE);
    let mut a = full.clone();
    let mut alive = vec![true; m];
    for &p in &eliminate {
        let pivot = a[(p, p)];
        if !pivot.is_finite() || pivot.abs() <= 1e-14 * scale {
            return Err(Error::SingularBlock {
                indices: eliminate.clone(),
            });
        }
        alive[p] = false;
        let rest: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
        for &j in &rest {
            let f = a[(j, p)] / pivot;
            if f == 0.0 {
                continue;
            }
            for &k in &rest {
                a[(j, k)] -= f * a[(p, k)];
            }
        }
    }

    let keep: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
    let n = keep.len();
    let b = DMatrix::from_fn(n, n, |r, c| {
        0.5 * (a[(keep[r], keep[c])] + a[(keep[c], keep[r])])
    });
    GroundedLaplacian::new(b, keep.iter().map(|&i| i as u32).collect())
}

/// Convenience pipeline: scaling, nodal assembly and Kron reduction.
pub fn grounded_laplacian(spec: &NetworkSpec) -> Result<GroundedLaplacian> {
    build_full_laplacian(&apply_scaling(spec))?.reduce()
}

/// Real symmetric positive-definite susceptance matrix over inverter nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundedLaplacian {
    b: DMatrix<f64>,
    node_order: Vec<u32>,
}

impl GroundedLaplacian {
    pub fn new(b: DMatrix<f64>, node_order: Vec<u32>) -> Result<Self> {
        let n = b.nrows();
        if n == 0 || b.ncols() != n {
            return Err(Error::NotGroundedLaplacian(format!(
                "expected a non-empty square matrix, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if node_order.len() != n {
            return Err(Error::NotGroundedLaplacian(format!(
                "node_order has {} entries for a {n}x{n} matrix",
                node_order.len()
            )));
        }
        let asym = (&b - b.transpose()).amax();
        if !(asym <= SYMMETRY_TOL) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        for r in 0..n {
            for c in 0..n {
                if r != c && b[(r, c)] > OFF_DIAGONAL_TOL {
                    return Err(Error::NotGroundedLaplacian(format!(
                        "positive off-diagonal entry b[{r}][{c}] = {}",
                        b[(r, c)]
                    )));
                }
            }
        }
        if b.clone().cholesky().is_none() {
            return Err(Error::NotGroundedLaplacian("matrix is not positive definite".into()));
        }
        Ok(Self { b, node_order })
    }

    /// Builds a Laplacian whose node labels are simply `0..n`.
    pub fn from_matrix(b: DMatrix<f64>) -> Result<Self> {
        let n = b.nrows() as u32;
        Self::new(b, (0..n).collect())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn node_order(&self) -> &[u32] {
        &self.node_order
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    /// Simultaneous row/column permutation: row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..n).collect::<Vec<_>>() {
            return Err(Error::Precondition(format!("{perm:?} is not a permutation of 0..{n}")));
        }
        let b = DMatrix::from_fn(n, n, |r, c| self.b[(perm[r], perm[c])]);
        let order = perm.iter().map(|&i| self.node_order[i]).collect();
        Self::new(b, order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: u32, role: NodeRole) -> Node {
        Node { id, role }
    }

    fn branch(from: u32, to: u32, x: f64) -> Branch {
        Branch {
            from,
            to,
            r_pu: 0.0,
            x_pu: x,
            scalable: true,
        }
    }

    fn spec(nodes: Vec<Node>, branches: Vec<Branch>) -> NetworkSpec {
        NetworkSpec {
            base: BaseValues::default(),
            k: 1.0,
            nodes,
            branches,
        }
    }

    fn two_node() -> NetworkSpec {
        spec(
            vec![node(1, NodeRole::Inverter), node(2, NodeRole::Infinite)],
            vec![branch(1, 2, 0.2)],
        )
    }

    fn chain() -> NetworkSpec {
        spec(
            vec![
                node(1, NodeRole::Inverter),
                node(2, NodeRole::Interior),
                node(3, NodeRole::Infinite),
            ],
            vec![branch(1, 2, 0.5), branch(2, 3, 0.5)],
        )
    }

    #[test]
    fn minimal_network_is_valid() {
        let s = two_node();
        s.validate().unwrap();
        assert_eq!(s.inverter_ids(), vec![1]);
    }

    #[test]
    fn two_infinite_nodes_rejected() {
        let mut s = two_node();
        s.nodes.push(node(3, NodeRole::Infinite));
        s.branches.push(branch(1, 3, 0.1));
        match s.validate() {
            Err(Error::Schema { field, .. }) => assert_eq!(field, "nodes[].role"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_inverter_rejected() {
        let s = spec(
            vec![node(1, NodeRole::Interior), node(2, NodeRole::Infinite)],
            vec![branch(1, 2, 0.2)],
        );
        assert!(matches!(s.validate(), Err(Error::Schema { .. })));
    }

    #[test]
    fn bad_reactance_names_field() {
        for x in [0.0, -0.1, 1e-12, f64::NAN] {
            let mut s = two_node();
            s.branches[0].x_pu = x;
            match s.validate() {
                Err(Error::Schema { field, .. }) => assert_eq!(field, "branches[0].x_pu"),
                other => panic!("x={x}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn disconnected_network_rejected() {
        let mut s = two_node();
        s.nodes.push(node(9, NodeRole::Inverter));
        match s.validate() {
            Err(Error::Disconnected { unreachable }) => assert_eq!(unreachable, vec![9]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_loop_and_unknown_endpoint_rejected() {
        let mut s = two_node();
        s.branches.push(branch(1, 1, 0.3));
        assert!(matches!(s.validate(), Err(Error::Schema { field, .. }) if field == "branches[1]"));

        let mut s = two_node();
        s.branches.push(branch(1, 42, 0.3));
        assert!(
            matches!(s.validate(), Err(Error::Schema { field, .. }) if field == "branches[1].to")
        );
    }

    #[test]
    fn duplicate_ids_and_bad_k_rejected() {
        let mut s = two_node();
        s.nodes.push(node(1, NodeRole::Interior));
        assert!(matches!(s.validate(), Err(Error::Schema { field, .. }) if field == "nodes[2].id"));

        let s = two_node().with_k(0.0);
        assert!(matches!(s.validate(), Err(Error::Schema { field, .. }) if field == "k"));
    }

    #[test]
    fn json_parse_errors_are_reported() {
        assert!(matches!(NetworkSpec::from_json_str("{ nope"), Err(Error::Parse { .. })));
        let missing_k = r#"{"nodes": [], "branches": []}"#;
        assert!(matches!(NetworkSpec::from_json_str(missing_k), Err(Error::Parse { .. })));
    }

    #[test]
    fn scalable_defaults_to_true() {
        let text = r#"{"k": 0.5, "nodes": [{"id": 1, "role": "inverter"}, {"id": 2, "role": "infinite"}],
                       "branches": [{"from": 1, "to": 2, "r_pu": 0.1, "x_pu": 0.2}]}"#;
        let s = NetworkSpec::from_json_str(text).unwrap();
        assert!(s.branches[0].scalable);
        assert_eq!(s.base, BaseValues::default());
    }

    #[test]
    fn scaling_semantics() {
        let s = two_node();
        assert_eq!(apply_scaling(&s).branches, s.branches);

        let mut s = two_node();
        s.branches[0].x_pu = 0.39;
        s.k = 0.1;
        let scaled = apply_scaling(&s);
        assert!((scaled.branches[0].x_pu - 0.039).abs() < 1e-15);
        assert_eq!(scaled.k, 1.0);

        let mut s = two_node().with_k(0.5);
        s.branches[0].scalable = false;
        assert_eq!(apply_scaling(&s).branches, s.branches);
    }

    #[test]
    fn full_laplacian_examples() {
        let full = build_full_laplacian(&two_node()).unwrap();
        assert_eq!(full.matrix.shape(), (1, 1));
        assert!((full.matrix[(0, 0)] - 5.0).abs() < 1e-12);

        let full = build_full_laplacian(&chain()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 4.0]);
        assert!((&full.matrix - expected).amax() < 1e-12);
        assert_eq!(full.node_ids, vec![1, 2]);
        assert_eq!(full.interior_indices(), vec![1]);
    }

    #[test]
    fn kron_examples() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]);
        let same = kron_reduce(&a, &[]).unwrap();
        assert_eq!(same.matrix(), &a);

        // series reactances add: 0.5 + 0.5 -> 1/1.0
        let b = grounded_laplacian(&chain()).unwrap();
        assert!((b.matrix()[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(b.node_order(), &[1]);
    }

    #[test]
    fn singular_interior_block_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        match kron_reduce(&a, &[1]) {
            Err(Error::SingularBlock { indices }) => assert_eq!(indices, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn grounded_laplacian_rejects_bad_matrices() {
        let asym = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -0.5, 2.0]);
        assert!(matches!(
            GroundedLaplacian::from_matrix(asym),
            Err(Error::NotSymmetric { .. })
        ));
        let pos_off = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!(GroundedLaplacian::from_matrix(pos_off).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, -2.0, 1.0]);
        assert!(GroundedLaplacian::from_matrix(indefinite).is_err());
    }

    #[test]
    fn permutation_relabels_nodes() {
        let b = GroundedLaplacian::new(
            DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 3.0]),
            vec![10, 20],
        )
        .unwrap();
        let p = b.permuted(&[1, 0]).unwrap();
        assert_eq!(p.node_order(), &[20, 10]);
        assert_eq!(p.matrix()[(0, 0)], 3.0);
        assert!(b.permuted(&[0, 0]).is_err());
    }
}
