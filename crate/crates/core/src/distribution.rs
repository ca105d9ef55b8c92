//! Sorted discrete distributions of a decision statistic under both
//! hypotheses, queried for the false-alarm and missed-detection tails.

use crate::detection::decision_cut;

/// One support point of a statistic with its probability under H0 and H1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Atom {
    pub value: f64,
    pub p0: f64,
    pub p1: f64,
}

impl Atom {
    pub fn new(value: f64, p0: f64, p1: f64) -> Self {
        Self { value, p0, p1 }
    }
}

/// Joint sum of independent terms, each term given as a list of atoms.
/// The running value is accumulated left to right, in term order.
pub(crate) fn convolve_all<'a, I>(terms: I) -> Vec<Atom>
where
    I: IntoIterator<Item = &'a [Atom]>,
{
    let mut acc = vec![Atom::new(0.0, 1.0, 1.0)];
    for term in terms {
        let mut next = Vec::with_capacity(acc.len() * term.len());
        for a in &acc {
            for t in term {
                let p0 = a.p0 * t.p0;
                let p1 = a.p1 * t.p1;
                if p0 == 0.0 && p1 == 0.0 {
                    continue;
                }
                next.push(Atom::new(a.value + t.value, p0, p1));
            }
        }
        acc = next;
    }
    acc
}

#[derive(Debug, Clone)]
pub(crate) struct AtomDistribution {
    values: Vec<f64>,
    // upper_h0[i] = sum of p0 over atoms i.., lower_h1[i] = sum of p1 over atoms ..i
    upper_h0: Vec<f64>,
    lower_h1: Vec<f64>,
}

impl AtomDistribution {
    pub fn from_atoms(mut atoms: Vec<Atom>) -> Self {
        atoms.retain(|a| (a.p0 > 0.0 || a.p1 > 0.0) && !a.value.is_nan());
        atoms.sort_by(|a, b| a.value.total_cmp(&b.value));

        let n = atoms.len();
        let mut upper_h0 = vec![0.0; n + 1];
        for i in (0..n).rev() {
            upper_h0[i] = upper_h0[i + 1] + atoms[i].p0;
        }
        let mut lower_h1 = vec![0.0; n + 1];
        for i in 0..n {
            lower_h1[i + 1] = lower_h1[i] + atoms[i].p1;
        }
        Self {
            values: atoms.into_iter().map(|a| a.value).collect(),
            upper_h0,
            lower_h1,
        }
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// `(Pr(S >= cut | H0), Pr(S < cut | H1))` for a raw cut point.
    pub fn tails_at_cut(&self, cut: f64) -> (f64, f64) {
        let idx = self.values.partition_point(|v| *v < cut);
        (self.upper_h0[idx].min(1.0), self.lower_h1[idx].min(1.0))
    }

    /// False-alarm and missed-detection probabilities of the rule
    /// "declare H1 iff S >= gamma" (ties go to H1).
    pub fn tails(&self, gamma: f64) -> (f64, f64) {
        self.tails_at_cut(decision_cut(gamma))
    }

    /// Same as [`tails`](Self::tails) for the statistic `S + X`, where `X`
    /// is an independent extra term given by its atoms.
    pub fn tails_with(&self, extra: &[Atom], gamma: f64) -> (f64, f64) {
        let cut = decision_cut(gamma);
        let mut fa = 0.0;
        let mut md = 0.0;
        for a in extra {
            if a.p0 == 0.0 && a.p1 == 0.0 {
                continue;
            }
            let (up, low) = self.tails_at_cut(cut - a.value);
            fa += a.p0 * up;
            md += a.p1 * low;
        }
        (fa.min(1.0), md.min(1.0))
    }
}
