//! Built-in drift systems, addressable by name from the CLI.

use std::sync::Arc;

use thiserror::Error;

use crate::drift_system::{Domain, DriftFn, DriftSystem};

#[derive(Debug, Error)]
#[error("unknown system '{name}'; known: {known}")]
pub struct UnknownSystem {
    pub name: String,
    known: &'static str,
}

const KNOWN: &str =
    "greedy-matching, linear-test, coupled-cooperative-2d, noncooperative-2d, zero-drift";

/// Greedy matching on the uniform random graph process:
/// `f(t, z) = (1 - 2z)^2` on `t in [0, 4]`, `z in [0, 1/2]`.
///
/// On that box `|f| <= 1` and `|df/dz| = 4|1 - 2z| <= 4`, so `L = 4`,
/// `B = 1`. One-dimensional, hence cooperative.
pub fn greedy_matching() -> DriftSystem {
    let f: DriftFn = Arc::new(|_t, y| {
        let w = 1.0 - 2.0 * y[0];
        w * w
    });
    let domain = Domain::new(vec![0.0, 0.0], vec![4.0, 0.5]).unwrap();
    DriftSystem::new(vec![f], domain, 4.0, 1.0)
        .unwrap()
        .with_declared_cooperative(true)
}

/// `f(t, z) = z` on `t in [0, 2]`, `z in [0, 1]`; solution `z0 e^t`,
/// which exits the box in finite time for `z0 > 0`. Exercises the
/// domain-exit path of the integrator.
pub fn linear_test() -> DriftSystem {
    let f: DriftFn = Arc::new(|_t, y| y[0]);
    let domain = Domain::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
    DriftSystem::new(vec![f], domain, 1.0, 1.0)
        .unwrap()
        .with_declared_cooperative(true)
}

/// `f_1 = y_2`, `f_2 = y_1` on `t in [0, 2]`, `y in [0, 1]^2`. Both
/// off-diagonal partials are +1, so the system is cooperative.
pub fn coupled_cooperative_2d() -> DriftSystem {
    let f1: DriftFn = Arc::new(|_t, y| y[1]);
    let f2: DriftFn = Arc::new(|_t, y| y[0]);
    let domain = Domain::new(vec![0.0, 0.0, 0.0], vec![2.0, 1.0, 1.0]).unwrap();
    DriftSystem::new(vec![f1, f2], domain, 1.0, 1.0)
        .unwrap()
        .with_declared_cooperative(true)
}

/// `f_1 = -y_2`, `f_2 = y_1` (a rotation) on `t in [0, 2]`,
/// `y in [-1, 1]^2`. Not cooperative: `f_1` decreases in `y_2`, which is
/// exactly the configuration where multi-dimensional comparison fails.
pub fn noncooperative_2d() -> DriftSystem {
    let f1: DriftFn = Arc::new(|_t, y| -y[1]);
    let f2: DriftFn = Arc::new(|_t, y| y[0]);
    let domain = Domain::new(vec![0.0, -1.0, -1.0], vec![2.0, 1.0, 1.0]).unwrap();
    DriftSystem::new(vec![f1, f2], domain, 1.0, 1.0).unwrap()
}

/// `f = 0` on a wide box, the limit system of a centered ±1 walk scaled
/// by `n`: `y = const`, `L = 0`, `B = 0`.
pub fn zero_drift() -> DriftSystem {
    let f: DriftFn = Arc::new(|_, _| 0.0);
    let domain = Domain::new(vec![0.0, -2.0], vec![4.0, 2.0]).unwrap();
    DriftSystem::new(vec![f], domain, 0.0, 0.0)
        .unwrap()
        .with_declared_cooperative(true)
}

/// Look up a built-in system by its CLI name.
pub fn by_name(name: &str) -> Result<DriftSystem, UnknownSystem> {
    match name {
        "greedy-matching" => Ok(greedy_matching()),
        "linear-test" => Ok(linear_test()),
        "coupled-cooperative-2d" => Ok(coupled_cooperative_2d()),
        "noncooperative-2d" => Ok(noncooperative_2d()),
        "zero-drift" => Ok(zero_drift()),
        _ => Err(UnknownSystem {
            name: name.to_string(),
            known: KNOWN,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_all_names() {
        for name in [
            "greedy-matching",
            "linear-test",
            "coupled-cooperative-2d",
            "noncooperative-2d",
            "zero-drift",
        ] {
            assert!(by_name(name).is_ok(), "{name}");
        }
        assert!(by_name("no-such-system").is_err());
    }
}
