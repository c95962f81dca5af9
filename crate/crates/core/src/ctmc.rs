//! Sparse CTMC generators and a banded state-reduction steady-state solver.
//!
//! The solver eliminates states from the highest index down (Grassmann-Taksar-Heyman
//! reduction), never subtracting, so stationary probabilities come out entrywise
//! accurate even for stiff rate mixes (service rates in the kHz range next to
//! mobility rates below 1 s⁻¹). Elimination is restricted to the band of the
//! matrix, which for grid-major orderings is a few grid rows wide.

use crate::error::{Error, Result};

/// Generator matrix in compressed sparse row form, diagonal included.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Generator {
    /// Builds a generator from per-row off-diagonal entries.
    ///
    /// Duplicate columns are summed, zero rates dropped, and the diagonal set to
    /// minus the row sum.
    pub fn from_offdiagonal_rows(rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.retain(|&(j, v)| j != i && v != 0.0);
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len() + 1);
            for (j, v) in row {
                if j >= n {
                    return Err(Error::Dimension { what: "generator column index", expected: n, got: j });
                }
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::domain(format!("off-diagonal rate q[{i}][{j}] = {v} must be finite and positive")));
                }
                match merged.last_mut() {
                    Some((lj, lv)) if *lj == j => *lv += v,
                    _ => merged.push((j, v)),
                }
            }
            let diag = -merged.iter().map(|&(_, v)| v).sum::<f64>();
            let pos = merged.partition_point(|&(j, _)| j < i);
            merged.insert(pos, (i, diag));
            for (j, v) in merged {
                cols.push(j);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Ok(Generator { n, row_ptr, cols, vals })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Entries of row `i` (diagonal included), ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.n).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// max_i |Σ_j q_ij|.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum::<f64>().abs()).fold(0.0, f64::max)
    }

    /// ‖p·Q‖∞.
    pub fn left_residual(&self, p: &[f64]) -> f64 {
        let mut acc = vec![0.0; self.n];
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                acc[j] += pi * v;
            }
        }
        acc.into_iter().map(f64::abs).fold(0.0, f64::max)
    }

    /// Dense copy, row-major. Intended for tests and debugging of small chains.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        d
    }

    /// Strongly connected components with no outgoing edge, each sorted ascending,
    /// ordered by their smallest member.
    pub fn closed_classes(&self) -> Vec<Vec<usize>> {
        let comp = self.scc_labels();
        let ncomp = comp.iter().copied().max().map_or(0, |c| c + 1);
        let mut open = vec![false; ncomp];
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if comp[i] != comp[j] {
                    open[comp[i]] = true;
                }
            }
        }
        let mut classes: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
        for (i, &c) in comp.iter().enumerate() {
            if !open[c] {
                classes[c].push(i);
            }
        }
        let mut classes: Vec<Vec<usize>> = classes.into_iter().filter(|c| !c.is_empty()).collect();
        classes.sort_by_key(|c| c[0]);
        classes
    }

    // Iterative Tarjan.
    fn scc_labels(&self) -> Vec<usize> {
        const UNSEEN: usize = usize::MAX;
        let n = self.n;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0; n];
        let mut on_stack = vec![false; n];
        let mut comp = vec![UNSEEN; n];
        let mut stack = Vec::new();
        let mut next_index = 0;
        let mut next_comp = 0;
        let mut call: Vec<(usize, usize)> = Vec::new();
        for start in 0..n {
            if index[start] != UNSEEN {
                continue;
            }
            call.push((start, self.row_ptr[start]));
            index[start] = next_index;
            low[start] = next_index;
            next_index += 1;
            stack.push(start);
            on_stack[start] = true;
            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                if *pos < self.row_ptr[v + 1] {
                    let w = self.cols[*pos];
                    *pos += 1;
                    if w == v {
                        continue;
                    }
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, self.row_ptr[w]));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        while let Some(w) = stack.pop() {
                            on_stack[w] = false;
                            comp[w] = next_comp;
                            if w == v {
                                break;
                            }
                        }
                        next_comp += 1;
                    }
                }
            }
        }
        comp
    }

    /// Smallest-index state of the unique closed class.
    ///
    /// Fails with [`Error::Reducible`] naming a member of a second closed class when
    /// the chain has more than one.
    pub fn recurrent_root(&self) -> Result<usize> {
        let classes = self.closed_classes();
        match classes.as_slice() {
            [only] => Ok(only[0]),
            [first, second, ..] => Err(Error::Reducible { state: second[0], root: first[0] }),
            [] => Err(Error::Numeric("generator has no states".into())),
        }
    }
}

/// Stationary distribution of a unichain generator.
///
/// States outside the closed class receive exactly zero mass.
pub fn stationary(q: &Generator) -> Result<Vec<f64>> {
    let n = q.n();
    if n == 0 {
        return Err(Error::Numeric("generator has no states".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let root = q.recurrent_root()?;
    // Move the root to position 0; state reduction ends on it.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.swap(0, root);
    let p = gth_banded(q, &perm)?;
    let mut out = vec![0.0; n];
    for (new, &old) in perm.iter().enumerate() {
        out[old] = p[new];
    }
    Ok(out)
}

/// State reduction on the band. `perm[new] = old`; `perm` must be an involution.
fn gth_banded(q: &Generator, perm: &[usize]) -> Result<Vec<f64>> {
    let n = q.n();
    let inv = perm; // involution
    let mut bw = 0;
    for old_i in 0..n {
        for (old_j, _) in q.row(old_i) {
            bw = bw.max(inv[old_i].abs_diff(inv[old_j]));
        }
    }
    let width = 2 * bw + 1;
    let at = |i: usize, j: usize| i * width + j + bw - i;
    let mut a = vec![0.0f64; n * width];
    for old_i in 0..n {
        let i = inv[old_i];
        for (old_j, v) in q.row(old_i) {
            if old_j != old_i {
                a[at(i, inv[old_j])] = v;
            }
        }
    }

    let mut s = vec![0.0f64; n];
    for k in (1..n).rev() {
        let lo = k.saturating_sub(bw);
        let (head, tail) = a.split_at_mut(k * width);
        let row_k = &tail[lo + bw - k..bw];
        let sk: f64 = row_k.iter().sum();
        if !(sk > 0.0) || !sk.is_finite() {
            return Err(Error::Numeric(format!("state reduction hit a state ({}) with no path to lower states", perm[k])));
        }
        s[k] = sk;
        for i in lo..k {
            let base = i * width;
            let aik = head[base + k + bw - i];
            if aik == 0.0 {
                continue;
            }
            let f = aik / sk;
            let row_i = &mut head[base + lo + bw - i..base + k + bw - i];
            for (x, &y) in row_i.iter_mut().zip(row_k) {
                *x += f * y;
            }
        }
    }

    let mut p = vec![0.0f64; n];
    p[0] = 1.0;
    for j in 1..n {
        let lo = j.saturating_sub(bw);
        let mut acc = 0.0;
        for i in lo..j {
            acc += p[i] * a[at(i, j)];
        }
        p[j] = acc / s[j];
    }
    let total: f64 = p.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Numeric("stationary vector could not be normalised".into()));
    }
    for x in &mut p {
        *x /= total;
    }
    Ok(p)
}
