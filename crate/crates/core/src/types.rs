use std::collections::BTreeSet;
use std::fmt;

/// 1-based process index.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessId(pub u32);

impl ProcessId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    pub fn from_index(i: usize) -> Self {
        ProcessId(i as u32 + 1)
    }

    /// All ids of an `n`-process system in ascending order.
    pub fn all(n: usize) -> impl Iterator<Item = ProcessId> {
        (1..=n as u32).map(ProcessId)
    }
}

impl fmt::Debug for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A proposed value tagged with its proposer.
///
/// The derived order (proposer first, then value bytes) is the deterministic
/// `choice` order used everywhere a single pair must be picked.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pair {
    pub proposer: ProcessId,
    pub value: Vec<u8>,
}

impl Pair {
    pub fn new(value: impl Into<Vec<u8>>, proposer: ProcessId) -> Self {
        Pair {
            proposer,
            value: value.into(),
        }
    }
}

impl fmt::Debug for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match std::str::from_utf8(&self.value) {
            Ok(s) if s.len() <= 24 && s.chars().all(|c| !c.is_control()) => {
                write!(f, "<{s:?},{}>", self.proposer)
            }
            _ => write!(f, "<{}b,{}>", self.value.len(), self.proposer),
        }
    }
}

/// Minimum under (proposer, value). `None` on empty input.
pub fn choice<'a, I>(pairs: I) -> Option<&'a Pair>
where
    I: IntoIterator<Item = &'a Pair>,
{
    pairs.into_iter().min()
}

/// True when every pair carries the same value bytes (proposers ignored).
pub fn value_uniform<'a, I>(pairs: I) -> bool
where
    I: IntoIterator<Item = &'a Pair>,
{
    let mut it = pairs.into_iter();
    match it.next() {
        None => false,
        Some(first) => it.all(|p| p.value == first.value),
    }
}

/// Either the symbolic top element or a finite set of pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum CandidateSet {
    #[default]
    Top,
    Finite(BTreeSet<Pair>),
}

impl CandidateSet {
    pub fn is_top(&self) -> bool {
        matches!(self, CandidateSet::Top)
    }

    pub fn contains(&self, pair: &Pair) -> bool {
        match self {
            CandidateSet::Top => true,
            CandidateSet::Finite(s) => s.contains(pair),
        }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            CandidateSet::Top => None,
            CandidateSet::Finite(s) => Some(s.len()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn pairs(&self) -> Option<&BTreeSet<Pair>> {
        match self {
            CandidateSet::Top => None,
            CandidateSet::Finite(s) => Some(s),
        }
    }

    pub fn intersect(&self, other: &CandidateSet) -> CandidateSet {
        match (self, other) {
            (CandidateSet::Top, x) | (x, CandidateSet::Top) => x.clone(),
            (CandidateSet::Finite(a), CandidateSet::Finite(b)) => {
                CandidateSet::Finite(a.intersection(b).cloned().collect())
            }
        }
    }

    pub fn intersect_with(&self, other: &BTreeSet<Pair>) -> CandidateSet {
        self.intersect(&CandidateSet::Finite(other.clone()))
    }

    /// `self ⊆ other`, with every set a subset of Top.
    pub fn is_subset(&self, other: &CandidateSet) -> bool {
        match (self, other) {
            (_, CandidateSet::Top) => true,
            (CandidateSet::Top, CandidateSet::Finite(_)) => false,
            (CandidateSet::Finite(a), CandidateSet::Finite(b)) => a.is_subset(b),
        }
    }

    pub fn singleton(&self) -> Option<&Pair> {
        match self {
            CandidateSet::Finite(s) if s.len() == 1 => s.iter().next(),
            _ => None,
        }
    }
}

impl FromIterator<Pair> for CandidateSet {
    fn from_iter<T: IntoIterator<Item = Pair>>(iter: T) -> Self {
        CandidateSet::Finite(iter.into_iter().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(v: &str, j: u32) -> Pair {
        Pair::new(v, ProcessId(j))
    }

    #[test]
    fn choice_order() {
        assert_eq!(choice(&[p("b", 2), p("a", 1)]), Some(&p("a", 1)));
        assert_eq!(choice(&[p("v", 3)]), Some(&p("v", 3)));
        assert_eq!(choice(&[p("b", 2), p("a", 2)]), Some(&p("a", 2)));
        assert_eq!(choice(&[p("a", 2), p("z", 1)]), Some(&p("z", 1)));
        assert_eq!(choice(&Vec::<Pair>::new()), None);
    }

    #[test]
    fn same_value_two_proposers_are_two_pairs() {
        assert_ne!(p("v", 1), p("v", 2));
        assert!(value_uniform(&[p("v", 1), p("v", 2)]));
        assert!(!value_uniform(&[p("v", 1), p("w", 1)]));
        assert!(!value_uniform(&[]));
    }

    #[test]
    fn top_algebra_basics() {
        let s: CandidateSet = [p("a", 1)].into_iter().collect();
        assert_eq!(CandidateSet::Top.intersect(&s), s);
        assert_eq!(s.intersect(&CandidateSet::Top), s);
        assert!(s.is_subset(&CandidateSet::Top));
        assert!(!CandidateSet::Top.is_subset(&s));
        assert!(CandidateSet::Top.contains(&p("zz", 9)));
        assert_eq!(s.singleton(), Some(&p("a", 1)));
        assert_eq!(CandidateSet::Top.len(), None);
    }

    fn arb_set() -> impl Strategy<Value = BTreeSet<Pair>> {
        proptest::collection::btree_set(
            (1u32..5, "[a-c]{0,2}").prop_map(|(j, v)| Pair::new(v, ProcessId(j))),
            0..6,
        )
    }

    proptest! {
        #[test]
        fn top_is_intersection_identity(a in arb_set()) {
            let s = CandidateSet::Finite(a);
            prop_assert_eq!(CandidateSet::Top.intersect(&s), s.clone());
            prop_assert_eq!(s.intersect(&CandidateSet::Top), s.clone());
            prop_assert!(s.is_subset(&CandidateSet::Top));
        }

        #[test]
        fn intersection_shrinks(a in arb_set(), b in arb_set()) {
            let sa = CandidateSet::Finite(a);
            let sb = CandidateSet::Finite(b);
            let i = sa.intersect(&sb);
            prop_assert!(i.is_subset(&sa));
            prop_assert!(i.is_subset(&sb));
            prop_assert_eq!(i.clone(), sb.intersect(&sa));
        }

        #[test]
        fn choice_is_member_and_minimal(a in arb_set()) {
            if let Some(c) = choice(&a) {
                prop_assert!(a.contains(c));
                prop_assert!(a.iter().all(|x| c <= x));
            } else {
                prop_assert!(a.is_empty());
            }
        }
    }
}
