//! Robot description files.
//!
//! A plain-text, line-oriented key/value format:
//!
//! ```text
//! # comment
//! [robot]
//! name = planar2
//! gravity = 0 -9.81 0          # m/s², base frame
//!
//! [joint 1]
//! kind = revolute              # revolute | prismatic
//! a = 1.0                      # m      (standard DH)
//! alpha = 0.0                  # rad
//! d = 0.0                      # m
//! theta_offset = 0.0           # rad
//! amplitude = 0.8              # default excitation, rad or m
//!
//! [link 1]
//! mass = 1.0                   # kg
//! com = -0.5 0 0               # m, in frame 1
//! inertia = Ixx Ixy Ixz Iyy Iyz Izz   # kg·m², about the COM
//!
//! [friction 1]                 # optional, all joints or none
//! viscous = 0.1                # N·m·s/rad
//! coulomb = 0.05               # N·m
//! ```
//!
//! `amplitude` and `theta_offset` default to 0.5 and 0.0; all other keys are
//! required. Unknown keys and sections are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::{inertia_from_upper, DhParameters, Friction, Joint, JointKind, LinkInertia, RobotModel};
use crate::{Error, Result};

const DEFAULT_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Robot,
    Joint(usize),
    Link(usize),
    Friction(usize),
}

#[derive(Debug)]
struct Entry {
    value: String,
    line: usize,
}

struct Parser<'a> {
    source: &'a str,
    sections: BTreeMap<Section, (usize, BTreeMap<String, Entry>)>,
}

impl<'a> Parser<'a> {
    fn err(&self, line: usize, field: Option<&str>, message: impl Into<String>) -> Error {
        Error::Parse {
            source_name: self.source.to_string(),
            line,
            field: field.map(str::to_string),
            message: message.into(),
        }
    }

    fn parse_section_header(&self, header: &str, line: usize) -> Result<Section> {
        let mut parts = header.split_whitespace();
        let kind = parts.next().unwrap_or("");
        let index = parts.next();
        if parts.next().is_some() {
            return Err(self.err(line, None, format!("malformed section header [{header}]")));
        }
        let idx = |s: Option<&str>| -> Result<usize> {
            let s = s.ok_or_else(|| self.err(line, None, format!("[{kind}] needs an index")))?;
            match s.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i),
                _ => Err(self.err(line, None, format!("bad section index '{s}' (1-based)"))),
            }
        };
        match kind {
            "robot" if index.is_none() => Ok(Section::Robot),
            "joint" => Ok(Section::Joint(idx(index)?)),
            "link" => Ok(Section::Link(idx(index)?)),
            "friction" => Ok(Section::Friction(idx(index)?)),
            _ => Err(self.err(line, None, format!("unknown section [{header}]"))),
        }
    }

    fn parse(source: &'a str, text: &str) -> Result<Self> {
        let mut p = Parser {
            source,
            sections: BTreeMap::new(),
        };
        let mut current: Option<Section> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(header) = content.strip_prefix('[') {
                let header = header
                    .strip_suffix(']')
                    .ok_or_else(|| p.err(line, None, "unterminated section header"))?;
                let section = p.parse_section_header(header.trim(), line)?;
                if p.sections.contains_key(&section) {
                    return Err(p.err(line, None, format!("duplicate section [{}]", header.trim())));
                }
                p.sections.insert(section.clone(), (line, BTreeMap::new()));
                current = Some(section);
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| p.err(line, None, "expected 'key = value'"))?;
            let key = key.trim();
            let section = current
                .clone()
                .ok_or_else(|| p.err(line, Some(key), "key outside of any section"))?;
            let allowed: &[&str] = match section {
                Section::Robot => &["name", "gravity"],
                Section::Joint(_) => &["kind", "a", "alpha", "d", "theta_offset", "amplitude"],
                Section::Link(_) => &["mass", "com", "inertia"],
                Section::Friction(_) => &["viscous", "coulomb"],
            };
            if !allowed.contains(&key) {
                return Err(p.err(line, Some(key), format!("unknown key '{key}'")));
            }
            let entries = &mut p.sections.get_mut(&section).expect("section exists").1;
            if entries.contains_key(key) {
                return Err(p.err(line, Some(key), format!("duplicate key '{key}'")));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(p)
    }

    fn entry(&self, section: &Section, key: &str) -> Result<Option<&Entry>> {
        Ok(self.sections.get(section).and_then(|(_, e)| e.get(key)))
    }

    fn section_line(&self, section: &Section) -> usize {
        self.sections.get(section).map(|s| s.0).unwrap_or(0)
    }

    fn required(&self, section: &Section, name: &str, key: &str) -> Result<&Entry> {
        self.entry(section, key)?.ok_or_else(|| {
            self.err(
                self.section_line(section),
                Some(key),
                format!("[{name}] is missing required key '{key}'"),
            )
        })
    }

    fn numbers(&self, e: &Entry, key: &str, count: usize) -> Result<Vec<f64>> {
        let values: Vec<f64> = e
            .value
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| self.err(e.line, Some(key), format!("'{t}' is not a finite number")))
            })
            .collect::<Result<_>>()?;
        if values.len() != count {
            return Err(self.err(
                e.line,
                Some(key),
                format!("expected {count} number(s), found {}", values.len()),
            ));
        }
        Ok(values)
    }

    fn number(&self, section: &Section, name: &str, key: &str) -> Result<f64> {
        let e = self.required(section, name, key)?;
        Ok(self.numbers(e, key, 1)?[0])
    }

    fn number_or(&self, section: &Section, key: &str, default: f64) -> Result<f64> {
        match self.entry(section, key)? {
            Some(e) => Ok(self.numbers(e, key, 1)?[0]),
            None => Ok(default),
        }
    }
}

/// Parse a robot description. `source_name` is only used in diagnostics.
pub fn parse_robot(text: &str, source_name: &str) -> Result<RobotModel> {
    let p = Parser::parse(source_name, text)?;

    let robot = Section::Robot;
    if !p.sections.contains_key(&robot) {
        return Err(p.err(1, None, "missing [robot] section"));
    }
    let name = p.required(&robot, "robot", "name")?.value.clone();
    let g = p.required(&robot, "robot", "gravity")?;
    let g = p.numbers(g, "gravity", 3)?;

    let dof = p
        .sections
        .keys()
        .filter_map(|s| match s {
            Section::Joint(i) => Some(*i),
            _ => None,
        })
        .max()
        .ok_or_else(|| p.err(1, None, "no [joint N] sections"))?;

    let mut joints = Vec::with_capacity(dof);
    let mut links = Vec::with_capacity(dof);
    let mut friction = Vec::new();
    for i in 1..=dof {
        let js = Section::Joint(i);
        let jname = format!("joint {i}");
        if !p.sections.contains_key(&js) {
            return Err(p.err(1, None, format!("missing section [{jname}]")));
        }
        let kind_entry = p.required(&js, &jname, "kind")?;
        let kind = match kind_entry.value.as_str() {
            "revolute" => JointKind::Revolute,
            "prismatic" => JointKind::Prismatic,
            other => {
                return Err(p.err(
                    kind_entry.line,
                    Some("kind"),
                    format!("joint kind must be 'revolute' or 'prismatic', found '{other}'"),
                ))
            }
        };
        joints.push(Joint {
            kind,
            dh: DhParameters {
                a: p.number(&js, &jname, "a")?,
                alpha: p.number(&js, &jname, "alpha")?,
                d: p.number(&js, &jname, "d")?,
                theta_offset: p.number_or(&js, "theta_offset", 0.0)?,
            },
            amplitude: p.number_or(&js, "amplitude", DEFAULT_AMPLITUDE)?,
        });

        let ls = Section::Link(i);
        let lname = format!("link {i}");
        if !p.sections.contains_key(&ls) {
            return Err(p.err(1, None, format!("missing section [{lname}]")));
        }
        let com = p.numbers(p.required(&ls, &lname, "com")?, "com", 3)?;
        let inertia = p.numbers(p.required(&ls, &lname, "inertia")?, "inertia", 6)?;
        links.push(LinkInertia {
            mass: p.number(&ls, &lname, "mass")?,
            com: Vector3::new(com[0], com[1], com[2]),
            inertia_com: inertia_from_upper([
                inertia[0], inertia[1], inertia[2], inertia[3], inertia[4], inertia[5],
            ]),
        });

        let fs = Section::Friction(i);
        if p.sections.contains_key(&fs) {
            let fname = format!("friction {i}");
            friction.push((
                i,
                Friction {
                    viscous: p.number(&fs, &fname, "viscous")?,
                    coulomb: p.number(&fs, &fname, "coulomb")?,
                },
            ));
        }
    }
    for s in p.sections.keys() {
        if let Section::Link(i) | Section::Friction(i) = s {
            if *i > dof {
                return Err(p.err(
                    p.section_line(s),
                    None,
                    format!("section index {i} exceeds the number of joints ({dof})"),
                ));
            }
        }
    }
    let friction = match friction.len() {
        0 => None,
        k if k == dof => Some(friction.into_iter().map(|(_, f)| f).collect()),
        _ => {
            let missing = (1..=dof)
                .find(|i| !friction.iter().any(|(j, _)| j == i))
                .unwrap_or(1);
            return Err(p.err(
                1,
                None,
                format!("friction must be given for every joint or none; [friction {missing}] is missing"),
            ));
        }
    };

    let model = RobotModel {
        name,
        joints,
        links,
        gravity: Vector3::new(g[0], g[1], g[2]),
        friction,
    };
    model.validate().map_err(|e| match e {
        Error::InvalidModel(msg) => p.err(0, None, msg),
        other => other,
    })?;
    Ok(model)
}

pub fn read_robot_file(path: &Path) -> Result<RobotModel> {
    let text = std::fs::read_to_string(path)?;
    parse_robot(&text, &path.display().to_string())
}

impl RobotModel {
    /// Serialize in the robot description format; `parse_robot` reads it back
    /// bit-exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let g = &self.gravity;
        let _ = writeln!(s, "[robot]\nname = {}\ngravity = {:?} {:?} {:?}", self.name, g.x, g.y, g.z);
        for (i, (j, l)) in self.joints.iter().zip(&self.links).enumerate() {
            let kind = match j.kind {
                JointKind::Revolute => "revolute",
                JointKind::Prismatic => "prismatic",
            };
            let _ = writeln!(
                s,
                "\n[joint {}]\nkind = {kind}\na = {:?}\nalpha = {:?}\nd = {:?}\ntheta_offset = {:?}\namplitude = {:?}",
                i + 1,
                j.dh.a,
                j.dh.alpha,
                j.dh.d,
                j.dh.theta_offset,
                j.amplitude
            );
            let m = &l.inertia_com;
            let _ = writeln!(
                s,
                "\n[link {}]\nmass = {:?}\ncom = {:?} {:?} {:?}\ninertia = {:?} {:?} {:?} {:?} {:?} {:?}",
                i + 1,
                l.mass,
                l.com.x,
                l.com.y,
                l.com.z,
                m[(0, 0)],
                m[(0, 1)],
                m[(0, 2)],
                m[(1, 1)],
                m[(1, 2)],
                m[(2, 2)]
            );
            if let Some(f) = self.friction.as_ref().map(|f| f[i]) {
                let _ = writeln!(
                    s,
                    "\n[friction {}]\nviscous = {:?}\ncoulomb = {:?}",
                    i + 1,
                    f.viscous,
                    f.coulomb
                );
            }
        }
        s
    }
}
