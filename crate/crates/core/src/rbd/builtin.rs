use std::path::Path;

use super::{parse_robot, read_robot_file, RobotModel};
use crate::{Error, Result};

const BUILTINS: &[(&str, &str)] = &[
    ("pendulum", include_str!("../../robots/pendulum.robot")),
    ("planar2", include_str!("../../robots/planar2.robot")),
    ("spatial3", include_str!("../../robots/spatial3.robot")),
    ("ur10_like", include_str!("../../robots/ur10_like.robot")),
    ("panda_like", include_str!("../../robots/panda_like.robot")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// One of the robots shipped with the crate, or `None` for an unknown name.
pub fn builtin(name: &str) -> Option<RobotModel> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| parse_robot(text, n).expect("built-in robot files are valid"))
}

/// Resolve a robot reference: a built-in name or a path to a robot file,
/// optionally suffixed with `@k` to keep only the first `k` joints (the rest
/// are locked at zero and merged into link `k`).
pub fn resolve_robot(reference: &str) -> Result<RobotModel> {
    let (base, keep) = match reference.rsplit_once('@') {
        Some((b, k)) => {
            let k = k
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad joint count in robot reference '{reference}'")))?;
            (b, Some(k))
        }
        None => (reference, None),
    };
    let model = match builtin(base) {
        Some(m) => m,
        None => {
            let path = Path::new(base);
            if !path.exists() {
                return Err(Error::Config(format!(
                    "'{base}' is neither a built-in robot ({}) nor an existing file",
                    builtin_names().collect::<Vec<_>>().join(", ")
                )));
            }
            read_robot_file(path)?
        }
    };
    match keep {
        Some(k) => model.lock_after(k),
        None => Ok(model),
    }
}
