//! Compartmental model definitions.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Disease compartments used across the supported models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Compartment {
    S,
    E,
    I,
    R,
}

impl Compartment {
    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::I => "I",
            Compartment::R => "R",
        }
    }
}

impl fmt::Display for Compartment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Sir,
    Seir,
    Sirs,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Sir => "SIR",
            ModelKind::Seir => "SEIR",
            ModelKind::Sirs => "SIRS",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SIR" => Ok(ModelKind::Sir),
            "SEIR" => Ok(ModelKind::Seir),
            "SIRS" => Ok(ModelKind::Sirs),
            other => Err(Error::InvalidParameter(format!("unknown model '{other}'"))),
        }
    }
}

/// Which rate parameter drives a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateParam {
    Beta,
    Gamma,
    Mu,
}

/// How the per-subject rate of a transition is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateForm {
    /// `beta * I`: contact with infectives.
    InfectiveContact,
    /// A constant per-subject rate.
    Constant(RateParam),
}

impl RateForm {
    pub fn param(self) -> RateParam {
        match self {
            RateForm::InfectiveContact => RateParam::Beta,
            RateForm::Constant(p) => p,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub form: RateForm,
}

/// A compartmental model: ordered states and the transitions between them.
///
/// State indices are positions in `states`. Every state has at most one
/// exit transition in the supported models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub states: Vec<Compartment>,
    pub transitions: Vec<Transition>,
    pub monotone: bool,
    infectious: usize,
    exit: [Option<usize>; 4],
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        use Compartment::*;
        let (states, transitions) = match kind {
            ModelKind::Sir => (
                vec![S, I, R],
                vec![
                    Transition { from: 0, to: 1, form: RateForm::InfectiveContact },
                    Transition { from: 1, to: 2, form: RateForm::Constant(RateParam::Mu) },
                ],
            ),
            ModelKind::Seir => (
                vec![S, E, I, R],
                vec![
                    Transition { from: 0, to: 1, form: RateForm::InfectiveContact },
                    Transition { from: 1, to: 2, form: RateForm::Constant(RateParam::Gamma) },
                    Transition { from: 2, to: 3, form: RateForm::Constant(RateParam::Mu) },
                ],
            ),
            ModelKind::Sirs => (
                vec![S, I, R],
                vec![
                    Transition { from: 0, to: 1, form: RateForm::InfectiveContact },
                    Transition { from: 1, to: 2, form: RateForm::Constant(RateParam::Mu) },
                    Transition { from: 2, to: 0, form: RateForm::Constant(RateParam::Gamma) },
                ],
            ),
        };
        let infectious = states.iter().position(|&c| c == I).expect("every model has I");
        let mut exit = [None; 4];
        for (k, t) in transitions.iter().enumerate() {
            exit[t.from] = Some(k);
        }
        let monotone = is_acyclic(states.len(), &transitions);
        ModelSpec { kind, states, transitions, monotone, infectious, exit }
    }

    pub fn sir() -> Self {
        Self::new(ModelKind::Sir)
    }

    pub fn seir() -> Self {
        Self::new(ModelKind::Seir)
    }

    pub fn sirs() -> Self {
        Self::new(ModelKind::Sirs)
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    /// Index of the infectious compartment.
    pub fn infectious(&self) -> usize {
        self.infectious
    }

    pub fn susceptible(&self) -> usize {
        0
    }

    /// Index of the transition leaving `state`, if any.
    pub fn exit_transition(&self, state: usize) -> Option<usize> {
        self.exit.get(state).copied().flatten()
    }

    /// Index of the transition `from -> to`, if the model allows it.
    pub fn transition_index(&self, from: usize, to: usize) -> Option<usize> {
        self.exit_transition(from).filter(|&k| self.transitions[k].to == to)
    }

    pub fn state_index(&self, c: Compartment) -> Option<usize> {
        self.states.iter().position(|&s| s == c)
    }

    pub fn uses_gamma(&self) -> bool {
        self.transitions
            .iter()
            .any(|t| t.form == RateForm::Constant(RateParam::Gamma))
    }

    pub fn labels(&self) -> Vec<&'static str> {
        self.states.iter().map(|c| c.label()).collect()
    }
}

fn is_acyclic(n: usize, transitions: &[Transition]) -> bool {
    // Kahn's algorithm on the transition graph.
    let mut indeg = vec![0usize; n];
    for t in transitions {
        indeg[t.to] += 1;
    }
    let mut queue: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop() {
        seen += 1;
        for t in transitions.iter().filter(|t| t.from == v) {
            indeg[t.to] -= 1;
            if indeg[t.to] == 0 {
                queue.push(t.to);
            }
        }
    }
    seen == n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_counts_match_models() {
        assert_eq!(ModelSpec::sir().transitions.len(), 2);
        assert_eq!(ModelSpec::seir().transitions.len(), 3);
        assert_eq!(ModelSpec::sirs().transitions.len(), 3);
    }

    #[test]
    fn monotone_iff_acyclic() {
        assert!(ModelSpec::sir().monotone);
        assert!(ModelSpec::seir().monotone);
        assert!(!ModelSpec::sirs().monotone);
    }

    #[test]
    fn rate_forms() {
        let seir = ModelSpec::seir();
        assert_eq!(seir.transitions[0].form, RateForm::InfectiveContact);
        assert_eq!(seir.transitions[1].form, RateForm::Constant(RateParam::Gamma));
        assert_eq!(seir.transitions[2].form, RateForm::Constant(RateParam::Mu));
        let sirs = ModelSpec::sirs();
        assert_eq!(sirs.transitions[2].from, 2);
        assert_eq!(sirs.transitions[2].to, 0);
        assert_eq!(sirs.infectious(), 1);
        assert_eq!(seir.infectious(), 2);
        assert!(sirs.uses_gamma());
        assert!(!ModelSpec::sir().uses_gamma());
    }

    #[test]
    fn parse_kind() {
        assert_eq!("sirs".parse::<ModelKind>().unwrap(), ModelKind::Sirs);
        assert!("SIS".parse::<ModelKind>().is_err());
    }
}
