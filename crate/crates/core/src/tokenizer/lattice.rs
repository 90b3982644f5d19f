//! Piece lattice over the characters of one string, shared by the trainer
//! (forward-backward) and the model (Viterbi).

#[derive(Debug, Clone, Copy)]
pub(crate) struct Edge {
    pub end: usize,
    pub piece: u32,
    pub log_prob: f64,
}

#[derive(Debug)]
pub(crate) struct Lattice {
    /// Byte offset of every char boundary, `len() == chars + 1`.
    pub offsets: Vec<usize>,
    pub edges_from: Vec<Vec<Edge>>,
}

impl Lattice {
    /// Builds the lattice with one edge per known substring of at most
    /// `max_chars` characters.
    pub fn build<F>(text: &str, max_chars: usize, mut lookup: F) -> Self
    where
        F: FnMut(&str) -> Option<(u32, f64)>,
    {
        let mut offsets: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        offsets.push(text.len());
        let n = offsets.len() - 1;
        let mut edges_from = Vec::with_capacity(n);
        for start in 0..n {
            let mut edges = Vec::new();
            let last = (start + max_chars).min(n);
            for end in start + 1..=last {
                if let Some((piece, log_prob)) = lookup(&text[offsets[start]..offsets[end]]) {
                    edges.push(Edge {
                        end,
                        piece,
                        log_prob,
                    });
                }
            }
            edges_from.push(edges);
        }
        Lattice {
            offsets,
            edges_from,
        }
    }

    pub fn len(&self) -> usize {
        self.edges_from.len()
    }

    pub fn add_edge(&mut self, start: usize, edge: Edge) {
        self.edges_from[start].push(edge);
    }

    /// Best path as `(start, edge)` pairs. Among equal-scoring
    /// predecessors of a node the one with the smallest start wins.
    /// Returns `None` when the end node is unreachable.
    pub fn viterbi(&self) -> Option<(f64, Vec<(usize, Edge)>)> {
        let n = self.len();
        let mut best = vec![f64::NEG_INFINITY; n + 1];
        let mut back: Vec<Option<(usize, Edge)>> = vec![None; n + 1];
        best[0] = 0.0;
        for start in 0..n {
            if best[start] == f64::NEG_INFINITY {
                continue;
            }
            for edge in &self.edges_from[start] {
                let score = best[start] + edge.log_prob;
                if score > best[edge.end] {
                    best[edge.end] = score;
                    back[edge.end] = Some((start, *edge));
                }
            }
        }
        if n > 0 && back[n].is_none() {
            return None;
        }
        let mut path = Vec::new();
        let mut pos = n;
        while pos > 0 {
            let (start, edge) = back[pos]?;
            path.push((start, edge));
            pos = start;
        }
        path.reverse();
        Some((best[n], path))
    }

    /// Adds `weight` times the posterior expectation of every piece to
    /// `counts` and returns the log marginal likelihood of the string.
    pub fn accumulate_expected(&self, weight: f64, counts: &mut [f64]) -> f64 {
        let n = self.len();
        let mut alpha = vec![f64::NEG_INFINITY; n + 1];
        alpha[0] = 0.0;
        for start in 0..n {
            if alpha[start] == f64::NEG_INFINITY {
                continue;
            }
            for edge in &self.edges_from[start] {
                alpha[edge.end] = log_add(alpha[edge.end], alpha[start] + edge.log_prob);
            }
        }
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        beta[n] = 0.0;
        for start in (0..n).rev() {
            let mut acc = f64::NEG_INFINITY;
            for edge in &self.edges_from[start] {
                acc = log_add(acc, edge.log_prob + beta[edge.end]);
            }
            beta[start] = acc;
        }
        let z = alpha[n];
        if z == f64::NEG_INFINITY {
            return z;
        }
        for start in 0..n {
            for edge in &self.edges_from[start] {
                let post = alpha[start] + edge.log_prob + beta[edge.end] - z;
                counts[edge.piece as usize] += weight * post.exp();
            }
        }
        z
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lookup<'a>(table: &'a [(&'a str, f64)]) -> impl FnMut(&str) -> Option<(u32, f64)> + 'a {
        move |s| {
            table
                .iter()
                .position(|(p, _)| *p == s)
                .map(|i| (i as u32, table[i].1))
        }
    }

    #[test]
    fn viterbi_prefers_single_piece() {
        let table = [("a", -1.0), ("b", -1.0), ("ab", -1.5)];
        let lattice = Lattice::build("ab", 8, lookup(&table));
        let (score, path) = lattice.viterbi().unwrap();
        assert_eq!(score, -1.5);
        assert_eq!(path.len(), 1);
        assert_eq!(path[0].1.piece, 2);
    }

    #[test]
    fn expected_counts_match_enumeration() {
        // "ab": paths [ab] with p=e^-1.5, [a,b] with p=e^-2
        let table = [("a", -1.0), ("b", -1.0), ("ab", -1.5)];
        let lattice = Lattice::build("ab", 8, lookup(&table));
        let mut counts = vec![0.0; 3];
        let z = lattice.accumulate_expected(1.0, &mut counts);
        let p1 = (-1.5f64).exp();
        let p2 = (-2.0f64).exp();
        assert!((z - (p1 + p2).ln()).abs() < 1e-12);
        let post_ab = p1 / (p1 + p2);
        assert!((counts[2] - post_ab).abs() < 1e-12);
        assert!((counts[0] - (1.0 - post_ab)).abs() < 1e-12);
        assert!((counts[1] - (1.0 - post_ab)).abs() < 1e-12);
    }

    #[test]
    fn unreachable_end_yields_none() {
        let table = [("a", -1.0)];
        let lattice = Lattice::build("ab", 8, lookup(&table));
        assert!(lattice.viterbi().is_none());
    }

    #[test]
    fn empty_string_is_trivial() {
        let table = [("a", -1.0)];
        let lattice = Lattice::build("", 8, lookup(&table));
        let (score, path) = lattice.viterbi().unwrap();
        assert_eq!(score, 0.0);
        assert!(path.is_empty());
    }
}
