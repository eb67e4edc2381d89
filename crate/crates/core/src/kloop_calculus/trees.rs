use crate::error::{invalid, Result};

pub const MAX_TREE_VERTICES: usize = 9;

/// Tree on the cyclically ordered vertices `0..n`, edges stored as `(i, j)` with `i < j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NonCrossingTree {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

fn crosses(e: (usize, usize), f: (usize, usize)) -> bool {
    let ((i, j), (k, l)) = (e, f);
    (i < k && k < j && j < l) || (k < i && i < l && l < j)
}

impl NonCrossingTree {
    /// Checks edge count, connectivity and the non-crossing condition.
    pub fn is_valid(&self) -> bool {
        if self.n == 0 || self.edges.len() != self.n - 1 {
            return false;
        }
        if self.edges.iter().any(|&(i, j)| i >= j || j >= self.n) {
            return false;
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            p[x] = r;
            r
        }
        for &(i, j) in &self.edges {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a == b {
                return false;
            }
            parent[a] = b;
        }
        for (a, &e) in self.edges.iter().enumerate() {
            for &f in &self.edges[a + 1..] {
                if crosses(e, f) {
                    return false;
                }
            }
        }
        true
    }
}

/// Decodes a Pruefer sequence into the edge list of a labelled tree on `n >= 2` vertices.
fn pruefer_edges(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &s in seq {
        degree[s] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &s in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf always exists");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[leaf] -= 1;
        degree[s] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges.sort_unstable();
    edges
}

/// All non-crossing spanning trees of `K_n`, in lexicographic order of their sorted edge lists.
///
/// Every labelled tree is generated from its Pruefer sequence and crossing ones are discarded.
pub fn enumerate_noncrossing_trees(n: usize) -> Result<Vec<NonCrossingTree>> {
    if n == 0 || n > MAX_TREE_VERTICES {
        return invalid(format!("tree enumeration supports 1 <= n <= {MAX_TREE_VERTICES}, got {n}"));
    }
    if n == 1 {
        return Ok(vec![NonCrossingTree { n, edges: vec![] }]);
    }
    let len = n - 2;
    let total = n.pow(len as u32);
    let mut seq = vec![0usize; len];
    let mut trees = Vec::new();
    for code in 0..total {
        let mut c = code;
        for s in seq.iter_mut() {
            *s = c % n;
            c /= n;
        }
        let edges = pruefer_edges(&seq, n);
        let tree = NonCrossingTree { n, edges };
        if tree.is_valid() {
            trees.push(tree);
        }
    }
    trees.sort();
    Ok(trees)
}
