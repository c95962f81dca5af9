//! Per-grid-point process of the AP view and the update interface queue.
//!
//! A state is an AP view (D or R) together with the queue contents, a
//! sequence of at most `n_q` labels whose head is in service. States are
//! numbered view D first, then by queue length, then lexicographically with
//! D before R, so for `n_q = 2` state 3 (1-based) is view D with a single R
//! update in service and state 8 is view R with an empty queue.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Decision label carried by the view and by queued updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    D,
    R,
}

/// Affine rate `c + b_d·w_D + b_r·w_R`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateForm {
    pub c: f64,
    pub b_d: f64,
    pub b_r: f64,
}

impl RateForm {
    pub fn eval(&self, w_d: f64, w_r: f64) -> f64 {
        self.c + self.b_d * w_d + self.b_r * w_r
    }

    fn add(&mut self, o: RateForm) {
        self.c += o.c;
        self.b_d += o.b_d;
        self.b_r += o.b_r;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfoState {
    pub view: Label,
    /// Head first.
    pub queue: Vec<Label>,
}

/// Largest supported queue capacity; the state count doubles per slot.
pub const MAX_QUEUE: usize = 12;

#[derive(Debug, Clone)]
pub struct InfoForwardTemplate {
    pub n_q: usize,
    pub tau_hz: f64,
    pub mu_hz: f64,
    pub p_loss: f64,
    pub states: Vec<InfoState>,
    /// Off-diagonal arcs `(from, to, rate)`, 0-based, sorted, one per pair.
    pub arcs: Vec<(usize, usize, RateForm)>,
}

/// Number of states for capacity `n_q`: 2·(2^(n_q+1) − 1).
pub fn state_count(n_q: usize) -> usize {
    2 * ((1usize << (n_q + 1)) - 1)
}

fn half(n_q: usize) -> usize {
    (1usize << (n_q + 1)) - 1
}

/// Index of a state in the enumeration described in the module docs.
pub fn state_index(n_q: usize, view: Label, queue: &[Label]) -> usize {
    debug_assert!(queue.len() <= n_q);
    let val = queue.iter().fold(0usize, |acc, &l| (acc << 1) | (l == Label::R) as usize);
    let base = if view == Label::R { half(n_q) } else { 0 };
    base + (1usize << queue.len()) - 1 + val
}

pub fn build_template(n_q: usize, tau_hz: f64, mu_hz: f64, p_loss: f64) -> Result<InfoForwardTemplate> {
    if !(1..=MAX_QUEUE).contains(&n_q) {
        return Err(Error::domain(format!("queue size must be in 1..={MAX_QUEUE}, got {n_q}")));
    }
    if !(mu_hz.is_finite() && mu_hz > 0.0) {
        return Err(Error::domain(format!("mu must be > 0, got {mu_hz}")));
    }
    if !(tau_hz.is_finite() && tau_hz >= 0.0) {
        return Err(Error::domain(format!("tau must be >= 0, got {tau_hz}")));
    }
    if !(0.0..1.0).contains(&p_loss) {
        return Err(Error::domain(format!("p_loss must lie in [0, 1), got {p_loss}")));
    }

    let mut states = Vec::with_capacity(state_count(n_q));
    for view in [Label::D, Label::R] {
        for len in 0..=n_q {
            for val in 0..(1usize << len) {
                let queue = (0..len).map(|k| if (val >> (len - 1 - k)) & 1 == 1 { Label::R } else { Label::D }).collect();
                states.push(InfoState { view, queue });
            }
        }
    }

    let mut arcs: BTreeMap<(usize, usize), RateForm> = BTreeMap::new();
    let mut put = |from: usize, to: usize, r: RateForm| arcs.entry((from, to)).or_default().add(r);
    for (s, st) in states.iter().enumerate() {
        debug_assert_eq!(state_index(n_q, st.view, &st.queue), s);
        if st.queue.len() < n_q && tau_hz > 0.0 {
            for (label, form) in
                [(Label::D, RateForm { b_d: tau_hz, ..Default::default() }), (Label::R, RateForm { b_r: tau_hz, ..Default::default() })]
            {
                let mut q = st.queue.clone();
                q.push(label);
                put(s, state_index(n_q, st.view, &q), form);
            }
        }
        if let Some((&head, rest)) = st.queue.split_first() {
            let delivered = mu_hz * (1.0 - p_loss);
            put(s, state_index(n_q, head, rest), RateForm { c: delivered, ..Default::default() });
            if p_loss > 0.0 {
                put(s, state_index(n_q, st.view, rest), RateForm { c: mu_hz * p_loss, ..Default::default() });
            }
        }
    }

    Ok(InfoForwardTemplate { n_q, tau_hz, mu_hz, p_loss, states, arcs: arcs.into_iter().map(|((a, b), r)| (a, b, r)).collect() })
}

impl InfoForwardTemplate {
    /// L, the number of states.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Off-diagonal rates at the given weights, grouped by source state.
    pub fn instantiate(&self, w_d: f64, w_r: f64) -> Vec<Vec<(usize, f64)>> {
        let mut rows = vec![Vec::new(); self.len()];
        for &(a, b, r) in &self.arcs {
            let v = r.eval(w_d, w_r);
            if v != 0.0 {
                rows[a].push((b, v));
            }
        }
        rows
    }

    /// Debug dump `from,to,const,coef_wD,coef_wR` (1-based states).
    pub fn dump(&self) -> String {
        let mut s = String::from("from,to,const,coef_wD,coef_wR\n");
        for &(a, b, r) in &self.arcs {
            let _ = writeln!(s, "{},{},{},{},{}", a + 1, b + 1, r.c, r.b_d, r.b_r);
        }
        s
    }
}

/// 0-based indices of the D-view and R-view states.
pub fn state_sets(tmpl: &InfoForwardTemplate) -> (Vec<usize>, Vec<usize>) {
    (0..tmpl.len()).partition(|&s| tmpl.states[s].view == Label::D)
}
