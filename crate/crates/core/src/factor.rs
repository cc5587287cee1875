//! Dense potentials over small sets of discrete variables.

/// Table over `vars` (ascending variable indices), row-major with the last
/// variable varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Factor {
    pub vars: Vec<usize>,
    pub cards: Vec<usize>,
    pub values: Vec<f64>,
}

impl Factor {
    pub fn ones(vars: Vec<usize>, cards: Vec<usize>) -> Self {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        let size = cards.iter().product();
        Factor {
            vars,
            cards,
            values: vec![1.0; size],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Strides of `self.vars` as seen from a layout over `other_vars`:
    /// for each variable of `other_vars`, its stride in `self`, or 0 if absent.
    fn strides_into(&self, other_vars: &[usize]) -> Vec<usize> {
        let mut own = vec![0; self.vars.len()];
        let mut s = 1;
        for j in (0..self.vars.len()).rev() {
            own[j] = s;
            s *= self.cards[j];
        }
        other_vars
            .iter()
            .map(|v| match self.vars.binary_search(v) {
                Ok(j) => own[j],
                Err(_) => 0,
            })
            .collect()
    }

    /// Visits every assignment of `self` and passes the flat index of the
    /// matching entry of a factor with layout `strides` (as from `strides_into`).
    fn for_each_mapped(&self, strides: &[usize], mut f: impl FnMut(usize, usize)) {
        let n = self.vars.len();
        let mut counter = vec![0usize; n];
        let mut mapped = 0usize;
        for flat in 0..self.len() {
            f(flat, mapped);
            for j in (0..n).rev() {
                counter[j] += 1;
                mapped += strides[j];
                if counter[j] < self.cards[j] {
                    break;
                }
                mapped -= strides[j] * self.cards[j];
                counter[j] = 0;
            }
        }
    }

    fn mapped_indices(&self, strides: &[usize]) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        self.for_each_mapped(strides, |_, m| out.push(m));
        out
    }

    /// Multiplies in a factor whose variables are a subset of `self.vars`.
    pub fn mul_assign_sub(&mut self, other: &Factor) {
        let map = self.mapped_indices(&other.strides_into(&self.vars));
        for (v, m) in self.values.iter_mut().zip(map) {
            *v *= other.values[m];
        }
    }

    /// Divides by a factor over a subset of `self.vars`, with `0 / 0 = 0`.
    pub fn div_assign_sub(&mut self, other: &Factor) {
        let map = self.mapped_indices(&other.strides_into(&self.vars));
        for (v, m) in self.values.iter_mut().zip(map) {
            let d = other.values[m];
            *v = if d == 0.0 { 0.0 } else { *v / d };
        }
    }

    /// Sums out every variable not in `keep` (ascending subset of `self.vars`).
    pub fn marginalize(&self, keep: &[usize]) -> Factor {
        let cards = keep
            .iter()
            .map(|v| self.cards[self.vars.binary_search(v).expect("subset")])
            .collect();
        let mut out = Factor {
            vars: keep.to_vec(),
            cards,
            values: Vec::new(),
        };
        out.values = vec![0.0; out.cards.iter().product()];
        let strides = out.strides_into(&self.vars);
        let values = &self.values;
        let acc = &mut out.values;
        self.for_each_mapped(&strides, |flat, m| acc[m] += values[flat]);
        out
    }

    /// Zeroes every entry where `var` is not in state `state`.
    pub fn observe(&mut self, var: usize, state: usize) {
        let Ok(j) = self.vars.binary_search(&var) else {
            return;
        };
        let inner: usize = self.cards[j + 1..].iter().product();
        let card = self.cards[j];
        for (flat, v) in self.values.iter_mut().enumerate() {
            if (flat / inner) % card != state {
                *v = 0.0;
            }
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn scale(&mut self, by: f64) {
        for v in &mut self.values {
            *v *= by;
        }
    }

    /// Decodes a flat index into per-variable states.
    pub fn assignment(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.vars.len()];
        for j in (0..self.vars.len()).rev() {
            out[j] = flat % self.cards[j];
            flat /= self.cards[j];
        }
        out
    }
}
