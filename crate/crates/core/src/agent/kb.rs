use std::collections::BTreeSet;

use super::Literal;

/// A consistent set of ground literals: a literal and its negation are
/// never both present.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    facts: BTreeSet<Literal>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `lit`, replacing its negation if present. Returns whether
    /// the knowledge base changed.
    pub fn tell(&mut self, lit: Literal) -> bool {
        let removed = self.facts.remove(&lit.negate());
        self.facts.insert(lit) || removed
    }

    pub fn holds(&self, lit: &Literal) -> bool {
        self.facts.contains(lit)
    }

    /// The stored literal deciding `query`: the query itself, its negation,
    /// or nothing when unknown.
    pub fn answer(&self, query: &Literal) -> Option<&Literal> {
        self.facts.get(query).or_else(|| self.facts.get(&query.negate()))
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Literal> {
        self.facts.iter()
    }

    pub fn is_consistent(&self) -> bool {
        self.facts
            .iter()
            .filter(|l| !l.negated)
            .all(|l| !self.facts.contains(&l.negate()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lit(s: &str) -> Literal {
        s.parse().unwrap()
    }

    #[test]
    fn tell_is_idempotent() {
        let mut kb = KnowledgeBase::new();
        assert!(kb.tell(lit("p(1)")));
        let snapshot = kb.clone();
        assert!(!kb.tell(lit("p(1)")));
        assert_eq!(kb, snapshot);
    }

    #[test]
    fn negation_overwrites() {
        let mut kb = KnowledgeBase::new();
        kb.tell(lit("p(1)"));
        kb.tell(lit("¬p(1)"));
        assert!(kb.holds(&lit("¬p(1)")));
        assert!(!kb.holds(&lit("p(1)")));
        assert_eq!(kb.len(), 1);
        assert!(kb.is_consistent());
        assert_eq!(kb.answer(&lit("p(1)")), Some(&lit("¬p(1)")));
        assert_eq!(kb.answer(&lit("q")), None);
    }
}
