//! Registered scalar atoms whose nonsmooth points are declared explicitly.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::SubdiffSet;

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar function of one argument with a derivative on its smooth locus
/// and a declared subdifferential at each nonsmooth point.
#[derive(Clone)]
pub struct Atom {
    pub name: String,
    value: ScalarMap,
    derivative: ScalarMap,
    kinks: Vec<(f64, SubdiffSet)>,
}

impl fmt::Debug for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Atom")
            .field("name", &self.name)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl Atom {
    /// `kinks` sets must be one-dimensional.
    pub fn new(
        name: impl Into<String>,
        value: ScalarMap,
        derivative: ScalarMap,
        kinks: Vec<(f64, SubdiffSet)>,
    ) -> Self {
        debug_assert!(kinks.iter().all(|(_, s)| s.dim() == 1));
        Atom {
            name: name.into(),
            value,
            derivative,
            kinks,
        }
    }

    pub fn value(&self, y: f64) -> f64 {
        (self.value)(y)
    }

    pub fn derivative(&self, y: f64) -> f64 {
        (self.derivative)(y)
    }

    /// Declared subdifferential as an interval `[lo, hi]` if `y` is a kink.
    pub fn kink_interval(&self, y: f64) -> Option<(f64, f64)> {
        self.kinks
            .iter()
            .find(|(p, _)| (y - p).abs() <= 1e-12 * (1.0 + p.abs()))
            .map(|(_, set)| (-set.support(&[-1.0]), set.support(&[1.0])))
    }
}

/// `x ↦ x² cos(1/x)`, extended by `0` at the origin.
pub fn sqcosinv() -> Atom {
    Atom::new(
        "sqcosinv",
        Arc::new(|y: f64| if y == 0.0 { 0.0 } else { y * y * (1.0 / y).cos() }),
        Arc::new(|y: f64| {
            if y == 0.0 {
                0.0
            } else {
                2.0 * y * (1.0 / y).cos() + (1.0 / y).sin()
            }
        }),
        vec![(0.0, SubdiffSet::interval(-1.0, 1.0))],
    )
}

/// Name → atom map; immutable once handed to the parser.
#[derive(Debug, Clone)]
pub struct CustomAtomRegistry {
    atoms: BTreeMap<String, Arc<Atom>>,
}

impl Default for CustomAtomRegistry {
    fn default() -> Self {
        let mut reg = CustomAtomRegistry {
            atoms: BTreeMap::new(),
        };
        reg.register(sqcosinv());
        reg
    }
}

impl CustomAtomRegistry {
    pub fn empty() -> Self {
        CustomAtomRegistry {
            atoms: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, atom: Atom) {
        self.atoms.insert(atom.name.clone(), Arc::new(atom));
    }

    pub fn get(&self, name: &str) -> Option<Arc<Atom>> {
        self.atoms.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.atoms.keys().map(String::as_str)
    }
}
