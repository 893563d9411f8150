//! Binary tree partitions of covariate space: split rules selected from the
//! observed data, observation routing, rule enumeration under a minimum
//! node size, and the tree prior.

use thiserror::Error;

use crate::data::{CovValue, CovariateValues, NormalizedDataset, SurvivalDataset};

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("row {row}: categorical code {code} out of range for column {column}")]
    UnknownCategory {
        row: usize,
        code: u32,
        column: usize,
    },
    #[error("leaf {leaf} holds {count} rows, below the minimum node size {min}")]
    LeafBelowMinSize {
        leaf: u32,
        count: usize,
        min: usize,
    },
    #[error("node {0} is not a leaf")]
    NotALeaf(u32),
    #[error("node {0} is not internal")]
    NotInternal(u32),
    #[error("node {0} is not prunable (children are not both leaves)")]
    NotPrunable(u32),
    #[error("malformed tree text: {0}")]
    Parse(String),
}

/// A split rule: continuous rows route left when value <= threshold,
/// categorical rows route left when the label is in the subset.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitRule {
    pub variable: usize,
    pub kind: RuleKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuleKind {
    Threshold(f64),
    /// Sorted label codes; nonempty proper subset of the column's label set.
    Subset(Vec<u32>),
}

impl SplitRule {
    pub fn goes_left(&self, value: CovValue) -> bool {
        match (&self.kind, value) {
            (RuleKind::Threshold(r), CovValue::Real(v)) => v <= *r,
            (RuleKind::Subset(labels), CovValue::Code(c)) => labels.binary_search(&c).is_ok(),
            _ => panic!("rule kind does not match covariate kind"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub parent: Option<u32>,
    pub children: Option<(u32, u32)>,
    pub rule: Option<SplitRule>,
}

impl TreeNode {
    fn leaf(parent: Option<u32>) -> Self {
        Self {
            parent,
            children: None,
            rule: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Binary tree over covariate space. Node 0 is the root; every internal
/// node carries a rule and exactly two children. Trees are immutable
/// values: the move operations return modified copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn root() -> Self {
        Self {
            nodes: vec![TreeNode::leaf(None)],
        }
    }

    pub fn node(&self, id: u32) -> &TreeNode {
        &self.nodes[id as usize]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaves(&self) -> Vec<u32> {
        (0..self.nodes.len() as u32)
            .filter(|&i| self.nodes[i as usize].is_leaf())
            .collect()
    }

    pub fn internal_nodes(&self) -> Vec<u32> {
        (0..self.nodes.len() as u32)
            .filter(|&i| !self.nodes[i as usize].is_leaf())
            .collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self, id: u32) -> usize {
        let mut d = 0;
        let mut cur = id;
        while let Some(p) = self.nodes[cur as usize].parent {
            d += 1;
            cur = p;
        }
        d
    }

    /// Internal nodes whose children are both leaves; the prune candidates.
    pub fn prunable_nodes(&self) -> Vec<u32> {
        self.internal_nodes()
            .into_iter()
            .filter(|&id| {
                let (l, r) = self.nodes[id as usize].children.unwrap();
                self.nodes[l as usize].is_leaf() && self.nodes[r as usize].is_leaf()
            })
            .collect()
    }

    /// Unordered internal (parent, child) pairs; the swap candidates.
    pub fn swap_pairs(&self) -> Vec<(u32, u32)> {
        let mut pairs = Vec::new();
        for id in self.internal_nodes() {
            if let Some(p) = self.nodes[id as usize].parent {
                if !self.nodes[p as usize].is_leaf() {
                    pairs.push((p, id));
                }
            }
        }
        pairs
    }

    /// Routes one dataset row to its leaf.
    pub fn route(&self, data: &SurvivalDataset, row: usize) -> Result<u32, TreeError> {
        let mut cur = 0u32;
        loop {
            let node = &self.nodes[cur as usize];
            match (&node.rule, node.children) {
                (Some(rule), Some((l, r))) => {
                    let value = data.value(row, rule.variable);
                    if let (RuleKind::Subset(_), CovValue::Code(c)) = (&rule.kind, value) {
                        let n_labels = match &data.column(rule.variable).values {
                            CovariateValues::Categorical { labels, .. } => labels.len(),
                            _ => 0,
                        };
                        if c as usize >= n_labels {
                            return Err(TreeError::UnknownCategory {
                                row,
                                code: c,
                                column: rule.variable,
                            });
                        }
                    }
                    cur = if rule.goes_left(value) { l } else { r };
                }
                _ => return Ok(cur),
            }
        }
    }

    /// Routes a row subset, returning the rows landing in each leaf, keyed
    /// in leaf-order (ascending node id).
    pub fn partition_rows(
        &self,
        data: &SurvivalDataset,
        rows: &[u32],
    ) -> Result<Vec<(u32, Vec<u32>)>, TreeError> {
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); self.nodes.len()];
        for &row in rows {
            let leaf = self.route(data, row as usize)?;
            buckets[leaf as usize].push(row);
        }
        Ok(self
            .leaves()
            .into_iter()
            .map(|id| (id, std::mem::take(&mut buckets[id as usize])))
            .collect())
    }

    /// Rows reaching an arbitrary node (internal or leaf).
    pub fn rows_at_node(
        &self,
        data: &SurvivalDataset,
        rows: &[u32],
        target: u32,
    ) -> Result<Vec<u32>, TreeError> {
        // Path from root to target.
        let mut path = vec![target];
        let mut cur = target;
        while let Some(p) = self.nodes[cur as usize].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        let mut kept: Vec<u32> = rows.to_vec();
        for win in path.windows(2) {
            let (node, next) = (win[0], win[1]);
            let rule = self.nodes[node as usize].rule.as_ref().unwrap();
            let (l, _r) = self.nodes[node as usize].children.unwrap();
            let want_left = next == l;
            kept.retain(|&row| {
                let value = data.value(row as usize, rule.variable);
                rule.goes_left(value) == want_left
            });
        }
        Ok(kept)
    }

    /// Splits a leaf with the given rule; returns the new tree. The grown
    /// node keeps its id; the two fresh leaves are appended at the end.
    pub fn grow(&self, leaf: u32, rule: SplitRule) -> Result<Tree, TreeError> {
        if !self.nodes[leaf as usize].is_leaf() {
            return Err(TreeError::NotALeaf(leaf));
        }
        let mut nodes = self.nodes.clone();
        let l = nodes.len() as u32;
        let r = l + 1;
        nodes.push(TreeNode::leaf(Some(leaf)));
        nodes.push(TreeNode::leaf(Some(leaf)));
        nodes[leaf as usize].children = Some((l, r));
        nodes[leaf as usize].rule = Some(rule);
        Ok(Tree { nodes })
    }

    /// Deletes both (leaf) children of `node`, making it a leaf. Node ids
    /// are compacted; returns the new tree and the pruned node's new id.
    pub fn prune(&self, node: u32) -> Result<(Tree, u32), TreeError> {
        let (l, r) = self.nodes[node as usize]
            .children
            .ok_or(TreeError::NotInternal(node))?;
        if !self.nodes[l as usize].is_leaf() || !self.nodes[r as usize].is_leaf() {
            return Err(TreeError::NotPrunable(node));
        }
        let mut remap = vec![u32::MAX; self.nodes.len()];
        let mut nodes = Vec::with_capacity(self.nodes.len() - 2);
        for (id, n) in self.nodes.iter().enumerate() {
            if id as u32 == l || id as u32 == r {
                continue;
            }
            remap[id] = nodes.len() as u32;
            nodes.push(n.clone());
        }
        for n in &mut nodes {
            n.parent = n.parent.map(|p| remap[p as usize]);
            n.children = n.children.map(|(a, b)| (remap[a as usize], remap[b as usize]));
        }
        let new_id = remap[node as usize];
        nodes[new_id as usize].children = None;
        nodes[new_id as usize].rule = None;
        Ok((Tree { nodes }, new_id))
    }

    /// Replaces the rule at an internal node.
    pub fn with_rule(&self, node: u32, rule: SplitRule) -> Result<Tree, TreeError> {
        if self.nodes[node as usize].is_leaf() {
            return Err(TreeError::NotInternal(node));
        }
        let mut nodes = self.nodes.clone();
        nodes[node as usize].rule = Some(rule);
        Ok(Tree { nodes })
    }

    /// Exchanges the rules of two internal nodes.
    pub fn swap_rules(&self, a: u32, b: u32) -> Result<Tree, TreeError> {
        if self.nodes[a as usize].is_leaf() {
            return Err(TreeError::NotInternal(a));
        }
        if self.nodes[b as usize].is_leaf() {
            return Err(TreeError::NotInternal(b));
        }
        let mut nodes = self.nodes.clone();
        let ra = nodes[a as usize].rule.clone();
        nodes[a as usize].rule = nodes[b as usize].rule.clone();
        nodes[b as usize].rule = ra;
        Ok(Tree { nodes })
    }

    /// Rotation used when a swap pairs a parent and child splitting the same
    /// continuous variable. The child rises to the parent's position and the
    /// parent descends to the child's opposite side; the three subtrees
    /// reattach so every leaf region is preserved exactly.
    pub fn rotate(&self, parent: u32, child: u32) -> Result<Tree, TreeError> {
        let (pl, pr) = self.nodes[parent as usize]
            .children
            .ok_or(TreeError::NotInternal(parent))?;
        if self.nodes[child as usize].is_leaf() {
            return Err(TreeError::NotInternal(child));
        }
        let (cl, cr) = self.nodes[child as usize].children.unwrap();
        let mut nodes = self.nodes.clone();
        let grand = nodes[parent as usize].parent;
        if child == pl {
            // Right rotation: child takes parent's place, parent becomes the
            // child's right child and adopts (child's right, parent's right).
            nodes[child as usize].parent = grand;
            nodes[child as usize].children = Some((cl, parent));
            nodes[parent as usize].parent = Some(child);
            nodes[parent as usize].children = Some((cr, pr));
            nodes[cr as usize].parent = Some(parent);
            // cl keeps child as parent; pr keeps parent as parent.
        } else if child == pr {
            // Left rotation, mirror image.
            nodes[child as usize].parent = grand;
            nodes[child as usize].children = Some((parent, cr));
            nodes[parent as usize].parent = Some(child);
            nodes[parent as usize].children = Some((pl, cl));
            nodes[cl as usize].parent = Some(parent);
        } else {
            return Err(TreeError::NotInternal(child));
        }
        if let Some(g) = grand {
            let (gl, gr) = nodes[g as usize].children.unwrap();
            if gl == parent {
                nodes[g as usize].children = Some((child, gr));
            } else {
                nodes[g as usize].children = Some((gl, child));
            }
        }
        let tree = if grand.is_none() && child != 0 {
            Tree { nodes }.reindexed_with_root(child)
        } else {
            Tree { nodes }
        };
        Ok(tree)
    }

    /// Rebuilds the arena in preorder starting from `root`, producing the
    /// canonical node numbering (root = 0, children follow their parent).
    fn reindexed_with_root(&self, root: u32) -> Tree {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(root, None::<u32>)];
        while let Some((old_id, new_parent)) = stack.pop() {
            let old = &self.nodes[old_id as usize];
            let new_id = nodes.len() as u32;
            nodes.push(TreeNode {
                parent: new_parent,
                children: None,
                rule: old.rule.clone(),
            });
            if let Some(p) = new_parent {
                let node: &mut TreeNode = &mut nodes[p as usize];
                match node.children {
                    None => node.children = Some((new_id, new_id)),
                    Some((l, _)) => node.children = Some((l, new_id)),
                }
            }
            if let Some((l, r)) = old.children {
                // Push right first so the left child is visited first.
                stack.push((r, Some(new_id)));
                stack.push((l, Some(new_id)));
            }
        }
        Tree { nodes }
    }

    /// Canonical preorder renumbering; trees that differ only in arena
    /// layout serialize identically after this.
    pub fn canonical(&self) -> Tree {
        self.reindexed_with_root(0)
    }

    /// One-line canonical encoding, usable as a hash key in tests and the
    /// sample stream. Fields: id:parent:kind:variable:payload.
    pub fn encode(&self, data: &SurvivalDataset) -> String {
        let canon = self.canonical();
        let mut parts = Vec::with_capacity(canon.nodes.len());
        for (id, node) in canon.nodes.iter().enumerate() {
            let parent = node
                .parent
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".to_string());
            let (kind, var, payload) = match &node.rule {
                None => ("l".to_string(), "-".to_string(), "-".to_string()),
                Some(rule) => {
                    let var = escape(&data.column(rule.variable).name);
                    let payload = match &rule.kind {
                        RuleKind::Threshold(r) => format!("le={r}"),
                        RuleKind::Subset(codes) => {
                            let labels = match &data.column(rule.variable).values {
                                CovariateValues::Categorical { labels, .. } => labels,
                                _ => panic!("subset rule on continuous column"),
                            };
                            let joined = codes
                                .iter()
                                .map(|&c| escape(&labels[c as usize]))
                                .collect::<Vec<_>>()
                                .join("|");
                            format!("in={joined}")
                        }
                    };
                    ("s".to_string(), var, payload)
                }
            };
            parts.push(format!("{id}:{parent}:{kind}:{var}:{payload}"));
        }
        parts.join(";")
    }

    /// Parses the `encode` format back into a tree, resolving variable names
    /// and labels against the dataset.
    pub fn decode(text: &str, data: &SurvivalDataset) -> Result<Tree, TreeError> {
        let mut nodes: Vec<TreeNode> = Vec::new();
        for (idx, entry) in text.split(';').enumerate() {
            let fields: Vec<&str> = entry.split(':').collect();
            if fields.len() != 5 {
                return Err(TreeError::Parse(format!(
                    "node entry `{entry}` does not have 5 fields"
                )));
            }
            let id: usize = fields[0]
                .parse()
                .map_err(|_| TreeError::Parse(format!("bad node id `{}`", fields[0])))?;
            if id != idx {
                return Err(TreeError::Parse(format!(
                    "node ids must be sequential (got {id} at position {idx})"
                )));
            }
            let parent = match fields[1] {
                "-" => None,
                p => Some(
                    p.parse::<u32>()
                        .map_err(|_| TreeError::Parse(format!("bad parent id `{p}`")))?,
                ),
            };
            let rule = match fields[2] {
                "l" => None,
                "s" => {
                    let name = unescape(fields[3]);
                    let variable = data
                        .columns()
                        .iter()
                        .position(|c| c.name == name)
                        .ok_or_else(|| TreeError::Parse(format!("unknown variable `{name}`")))?;
                    let payload = fields[4];
                    let kind = if let Some(v) = payload.strip_prefix("le=") {
                        RuleKind::Threshold(v.parse().map_err(|_| {
                            TreeError::Parse(format!("bad threshold `{v}`"))
                        })?)
                    } else if let Some(v) = payload.strip_prefix("in=") {
                        let labels = match &data.column(variable).values {
                            CovariateValues::Categorical { labels, .. } => labels,
                            _ => {
                                return Err(TreeError::Parse(format!(
                                    "subset rule on continuous column `{name}`"
                                )))
                            }
                        };
                        let mut codes = Vec::new();
                        for lab in v.split('|') {
                            let lab = unescape(lab);
                            let code = labels
                                .iter()
                                .position(|l| *l == lab)
                                .ok_or_else(|| {
                                    TreeError::Parse(format!("unknown label `{lab}`"))
                                })? as u32;
                            codes.push(code);
                        }
                        codes.sort_unstable();
                        RuleKind::Subset(codes)
                    } else {
                        return Err(TreeError::Parse(format!("bad payload `{payload}`")));
                    };
                    Some(SplitRule { variable, kind })
                }
                other => return Err(TreeError::Parse(format!("bad node kind `{other}`"))),
            };
            nodes.push(TreeNode {
                parent,
                children: None,
                rule,
            });
        }
        if nodes.is_empty() {
            return Err(TreeError::Parse("empty tree".into()));
        }
        // Rebuild child links from parents, preserving encounter order.
        for id in 0..nodes.len() {
            if let Some(p) = nodes[id].parent {
                let slot = &mut nodes[p as usize].children;
                match slot {
                    None => *slot = Some((id as u32, id as u32)),
                    Some((l, r)) => {
                        if l == r {
                            *slot = Some((*l, id as u32));
                        } else {
                            return Err(TreeError::Parse(format!(
                                "node {p} has more than two children"
                            )));
                        }
                    }
                }
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            match (&node.rule, node.children) {
                (Some(_), Some((l, r))) if l != r => {}
                (None, None) => {}
                _ => {
                    return Err(TreeError::Parse(format!(
                        "node {id} is inconsistent (rule/children mismatch)"
                    )))
                }
            }
        }
        Ok(Tree { nodes })
    }
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '%' => out.push_str("%25"),
            ':' => out.push_str("%3a"),
            ';' => out.push_str("%3b"),
            '|' => out.push_str("%7c"),
            '=' => out.push_str("%3d"),
            ',' => out.push_str("%2c"),
            '\n' => out.push_str("%0a"),
            _ => out.push(ch),
        }
    }
    out
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let bytes = s.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(code) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(code as char);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i] as char);
        i += 1;
    }
    out
}

/// Hyperparameters of the tree prior: a node at depth d splits with
/// probability gamma * (1 + d)^(-theta) when at least one rule is
/// available, and each rule has mass 1/(m * m_star).
#[derive(Debug, Clone)]
pub struct TreePriorParams {
    pub gamma: f64,
    pub theta: f64,
    pub min_node_size: usize,
}

impl Default for TreePriorParams {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            theta: 2.0,
            min_node_size: 25,
        }
    }
}

impl TreePriorParams {
    pub fn split_prob(&self, depth: usize) -> f64 {
        self.gamma * (1.0 + depth as f64).powf(-self.theta)
    }
}

/// Enumerates the valid split rules for one variable at a node holding
/// `rows`. Continuous rules sit at distinct observed values; categorical
/// rules are nonempty proper subsets of the locally observed labels with
/// each unordered {subset, complement} pair counted once (the kept subset
/// contains the smallest observed label). Rules leaving either child with
/// fewer than `min_node_size` rows are excluded.
pub fn available_rules(
    data: &SurvivalDataset,
    rows: &[u32],
    variable: usize,
    min_node_size: usize,
) -> Vec<RuleKind> {
    match &data.column(variable).values {
        CovariateValues::Continuous(values) => {
            let mut observed: Vec<f64> = rows.iter().map(|&r| values[r as usize]).collect();
            observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = observed.len();
            let mut rules = Vec::new();
            let mut i = 0;
            while i < n {
                let v = observed[i];
                let mut j = i;
                while j < n && observed[j] == v {
                    j += 1;
                }
                let left = j; // rows with value <= v
                let right = n - j;
                if left >= min_node_size && right >= min_node_size {
                    rules.push(RuleKind::Threshold(v));
                }
                i = j;
            }
            rules
        }
        CovariateValues::Categorical { codes, .. } => {
            let mut observed: Vec<u32> = rows.iter().map(|&r| codes[r as usize]).collect();
            observed.sort_unstable();
            let mut label_counts: Vec<(u32, usize)> = Vec::new();
            for &c in &observed {
                match label_counts.last_mut() {
                    Some((lab, count)) if *lab == c => *count += 1,
                    _ => label_counts.push((c, 1)),
                }
            }
            let l = label_counts.len();
            if l < 2 {
                return Vec::new();
            }
            let total = observed.len();
            let mut rules = Vec::new();
            // Subsets of the observed labels containing the smallest one,
            // excluding the full set: each unordered pair appears once.
            let m = l - 1;
            for mask in 0..(1u32 << m) - 1 {
                let mut subset = vec![label_counts[0].0];
                let mut in_count = label_counts[0].1;
                for (bit, &(lab, count)) in label_counts.iter().skip(1).enumerate() {
                    if mask & (1 << bit) != 0 {
                        subset.push(lab);
                        in_count += count;
                    }
                }
                let out_count = total - in_count;
                if in_count >= min_node_size && out_count >= min_node_size {
                    subset.sort_unstable();
                    rules.push(RuleKind::Subset(subset));
                }
            }
            rules
        }
    }
}

/// Number of available rules for one variable, without materializing them.
pub fn count_available_rules(
    data: &SurvivalDataset,
    rows: &[u32],
    variable: usize,
    min_node_size: usize,
) -> usize {
    match &data.column(variable).values {
        CovariateValues::Continuous(values) => {
            let mut observed: Vec<f64> = rows.iter().map(|&r| values[r as usize]).collect();
            observed.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let n = observed.len();
            let mut count = 0;
            let mut i = 0;
            while i < n {
                let v = observed[i];
                let mut j = i;
                while j < n && observed[j] == v {
                    j += 1;
                }
                if j >= min_node_size && n - j >= min_node_size {
                    count += 1;
                }
                i = j;
            }
            count
        }
        CovariateValues::Categorical { .. } => {
            available_rules(data, rows, variable, min_node_size).len()
        }
    }
}

/// Cheap existence test for a valid rule on one variable: O(rows) for
/// continuous columns via order statistics.
pub fn has_available_rule(
    data: &SurvivalDataset,
    rows: &[u32],
    variable: usize,
    min_node_size: usize,
) -> bool {
    let s = rows.len();
    if s < 2 * min_node_size {
        return false;
    }
    match &data.column(variable).values {
        CovariateValues::Continuous(values) => {
            // A valid cut exists iff the min-th smallest value is strictly
            // below the min-th largest.
            let mut observed: Vec<f64> = rows.iter().map(|&r| values[r as usize]).collect();
            let (_, lo, _) = observed
                .select_nth_unstable_by(min_node_size - 1, |a, b| a.partial_cmp(b).unwrap());
            let lo = *lo;
            let (_, hi, _) = observed
                .select_nth_unstable_by(s - min_node_size, |a, b| a.partial_cmp(b).unwrap());
            lo < *hi
        }
        CovariateValues::Categorical { .. } => {
            count_available_rules(data, rows, variable, min_node_size) > 0
        }
    }
}

/// Variables with at least one available rule at a node.
pub fn splittable_variables(
    data: &SurvivalDataset,
    rows: &[u32],
    min_node_size: usize,
) -> Vec<usize> {
    (0..data.n_covariates())
        .filter(|&v| has_available_rule(data, rows, v, min_node_size))
        .collect()
}

/// True when any variable can split this node.
pub fn any_splittable_variable(
    data: &SurvivalDataset,
    rows: &[u32],
    min_node_size: usize,
) -> bool {
    (0..data.n_covariates()).any(|v| has_available_rule(data, rows, v, min_node_size))
}

/// Validity of a rule's induced bipartition at a node, ignoring which side
/// routes left: both sides must hold at least `min_node_size` rows. This is
/// the membership test used by the prior, where a rule is identified with
/// the unordered partition it induces.
pub fn rule_splits_validly(
    data: &SurvivalDataset,
    rows: &[u32],
    rule: &SplitRule,
    min_node_size: usize,
) -> bool {
    let left = rows
        .iter()
        .filter(|&&r| rule.goes_left(data.value(r as usize, rule.variable)))
        .count();
    left >= min_node_size && rows.len() - left >= min_node_size
}

/// Exact membership of `rule` in the canonical available-rule set at a
/// node: the rule must induce the same oriented split as an enumerated
/// rule. Proposal densities use this; unlike the prior they must match the
/// proposal mechanics, which only ever emit canonical rules.
pub fn rule_in_available_set(
    data: &SurvivalDataset,
    rows: &[u32],
    rule: &SplitRule,
    min_node_size: usize,
) -> bool {
    let s = rows.len();
    match (&rule.kind, &data.column(rule.variable).values) {
        (RuleKind::Threshold(_), CovariateValues::Continuous(_)) => {
            let left = rows
                .iter()
                .filter(|&&r| rule.goes_left(data.value(r as usize, rule.variable)))
                .count();
            left >= min_node_size && s - left >= min_node_size
        }
        (RuleKind::Subset(subset), CovariateValues::Categorical { codes, .. }) => {
            let mut observed: Vec<u32> = rows.iter().map(|&r| codes[r as usize]).collect();
            observed.sort_unstable();
            observed.dedup();
            if observed.len() < 2 {
                return false;
            }
            // Canonical form keeps the side holding the smallest observed
            // label; membership additionally needs both sides >= min.
            let local: Vec<u32> = subset
                .iter()
                .copied()
                .filter(|c| observed.binary_search(c).is_ok())
                .collect();
            if local.is_empty() || local.len() == observed.len() {
                return false;
            }
            if local[0] != observed[0] {
                return false;
            }
            // The stored subset must not leak labels outside the observed
            // set in a way that changes the induced local split; the local
            // projection drives routing, so compare counts on it.
            let in_count = rows
                .iter()
                .filter(|&&r| local.binary_search(&codes[r as usize]).is_ok())
                .count();
            in_count >= min_node_size && s - in_count >= min_node_size
        }
        _ => false,
    }
}

/// True when `rule` induces the same left-row set at this node as `other`.
/// Rules are identified with the bipartition they induce on the node's
/// data; a threshold between observed values is equivalent to the largest
/// observed value below it.
pub fn rules_equivalent(
    data: &SurvivalDataset,
    rows: &[u32],
    rule: &SplitRule,
    other: &SplitRule,
) -> bool {
    if rule.variable != other.variable {
        return false;
    }
    rows.iter().all(|&r| {
        let v = data.value(r as usize, rule.variable);
        rule.goes_left(v) == other.goes_left(v)
    })
}

/// Finds the index within `rules` (on `rule.variable`) inducing the same
/// bipartition as `rule`, if any.
pub fn equivalent_rule_index(
    data: &SurvivalDataset,
    rows: &[u32],
    rule: &SplitRule,
    rules: &[RuleKind],
) -> Option<usize> {
    rules.iter().position(|kind| {
        let candidate = SplitRule {
            variable: rule.variable,
            kind: kind.clone(),
        };
        rules_equivalent(data, rows, rule, &candidate)
    })
}

/// Log prior of a tree under the fitting dataset: the product over nodes of
/// split/no-split probabilities times, per internal node, 1/(m * m_star).
/// A node with no available rules cannot split, so its no-split factor is 1.
/// Leaves holding fewer than `min_node_size` rows are a tree/data mismatch.
/// Returns -inf when an internal node's rule is not available at that node.
pub fn log_prior(
    tree: &Tree,
    data: &NormalizedDataset,
    params: &TreePriorParams,
) -> Result<f64, TreeError> {
    let dataset = &data.dataset;
    let all_rows: Vec<u32> = (0..dataset.n() as u32).collect();
    // The leaf-size contract is checked up front so a mismatched tree is
    // always an error rather than a zero-mass prior.
    for (leaf, rows) in tree.partition_rows(dataset, &all_rows)? {
        if rows.len() < params.min_node_size {
            return Err(TreeError::LeafBelowMinSize {
                leaf,
                count: rows.len(),
                min: params.min_node_size,
            });
        }
    }
    let mut total = 0.0;
    let mut stack: Vec<(u32, usize, Vec<u32>)> = vec![(0, 0, all_rows)];
    while let Some((id, depth, rows)) = stack.pop() {
        let node = tree.node(id);
        match (&node.rule, node.children) {
            (None, None) => {
                if any_splittable_variable(dataset, &rows, params.min_node_size) {
                    total += (1.0 - params.split_prob(depth)).ln();
                }
                // Otherwise the split probability is 0 and the no-split
                // factor is 1, contributing nothing.
            }
            (Some(rule), Some((l, r))) => {
                let vars = splittable_variables(dataset, &rows, params.min_node_size);
                if vars.is_empty()
                    || !rule_splits_validly(dataset, &rows, rule, params.min_node_size)
                {
                    // A split that could not have been drawn at this node.
                    return Ok(f64::NEG_INFINITY);
                }
                total += params.split_prob(depth).ln();
                let m_star =
                    count_available_rules(dataset, &rows, rule.variable, params.min_node_size);
                total -= (vars.len() as f64).ln() + (m_star as f64).ln();
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&row| {
                    rule.goes_left(dataset.value(row as usize, rule.variable))
                });
                stack.push((l, depth + 1, left_rows));
                stack.push((r, depth + 1, right_rows));
            }
            _ => unreachable!("node invariant violated"),
        }
    }
    Ok(total)
}
