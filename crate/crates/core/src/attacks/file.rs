//! Plain-text perturbation files.
//!
//! ```text
//! # attack: surrogate-greedy
//! # budget: 5
//! # target: 17
//! 3 17
//! 17 240
//! # target: 42
//! 42 1000
//! ```
//!
//! One `i j` pair per line, 0-based, order significant. `#` lines carry
//! `key: value` metadata; a `target` line opens a new block so that one file
//! can hold a whole targeted suite. Pairs before any `target` line belong to an
//! untargeted block. Unknown keys and free-form comments are ignored.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Perturbation;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationBlock {
    pub target: Option<usize>,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PerturbationFile {
    pub attack: Option<String>,
    pub budget: Option<usize>,
    pub blocks: Vec<PerturbationBlock>,
}

impl PerturbationFile {
    pub fn single(
        attack: &str,
        budget: usize,
        target: Option<usize>,
        perturbation: Perturbation,
    ) -> Self {
        Self {
            attack: Some(attack.to_string()),
            budget: Some(budget),
            blocks: vec![PerturbationBlock {
                target,
                perturbation,
            }],
        }
    }

    /// All flips of the untargeted block (empty if there is none).
    pub fn untargeted(&self) -> Option<&Perturbation> {
        self.blocks
            .iter()
            .find(|b| b.target.is_none())
            .map(|b| &b.perturbation)
    }

    pub fn for_target(&self, target: usize) -> Option<&Perturbation> {
        self.blocks
            .iter()
            .find(|b| b.target == Some(target))
            .map(|b| &b.perturbation)
    }

    pub fn parse(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let origin = origin.as_ref();
        let mut file = Self::default();
        let mut current: Option<PerturbationBlock> = None;
        let err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let Some((key, value)) = comment.split_once(':') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "attack" => file.attack = Some(value.to_string()),
                    "budget" => {
                        file.budget = Some(
                            value
                                .parse()
                                .map_err(|_| err(lineno, format!("bad budget {value:?}")))?,
                        )
                    }
                    "target" => {
                        let t = value
                            .parse()
                            .map_err(|_| err(lineno, format!("bad target {value:?}")))?;
                        if let Some(done) = current.take() {
                            file.blocks.push(done);
                        }
                        current = Some(PerturbationBlock {
                            target: Some(t),
                            perturbation: Perturbation::default(),
                        });
                    }
                    _ => {}
                }
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(lineno, format!("expected `i j`, got {line:?}")));
            };
            let parse_id = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(lineno, format!("bad node id {s:?}")))
            };
            let (i, j) = (parse_id(a)?, parse_id(b)?);
            let block = current.get_or_insert_with(|| PerturbationBlock {
                target: None,
                perturbation: Perturbation::default(),
            });
            block
                .perturbation
                .push(i, j)
                .map_err(|e| err(lineno, e.to_string()))?;
        }
        if let Some(done) = current {
            file.blocks.push(done);
        }
        Ok(file)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(a) = &self.attack {
            writeln!(out, "# attack: {a}").unwrap();
        }
        if let Some(b) = self.budget {
            writeln!(out, "# budget: {b}").unwrap();
        }
        for block in &self.blocks {
            if let Some(t) = block.target {
                writeln!(out, "# target: {t}").unwrap();
            }
            for &(i, j) in block.perturbation.flips() {
                writeln!(out, "{i} {j}").unwrap();
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let file = PerturbationFile {
            attack: Some("surrogate-greedy".into()),
            budget: Some(2),
            blocks: vec![
                PerturbationBlock {
                    target: Some(4),
                    perturbation: Perturbation::new([(4, 9), (1, 4)]).unwrap(),
                },
                PerturbationBlock {
                    target: Some(7),
                    perturbation: Perturbation::default(),
                },
            ],
        };
        let text = file.render();
        assert_eq!(PerturbationFile::parse(&text, "mem").unwrap(), file);
        assert_eq!(file.for_target(4).unwrap().flips(), &[(4, 9), (1, 4)]);
        assert!(file.for_target(7).unwrap().is_empty());
        assert!(file.untargeted().is_none());
    }

    #[test]
    fn untargeted_lines_and_normalization() {
        let f =
            PerturbationFile::parse("# attack: dice\n# produced elsewhere\n5 2\n\n0 1\n", "mem")
                .unwrap();
        assert_eq!(f.attack.as_deref(), Some("dice"));
        assert_eq!(f.budget, None);
        assert_eq!(f.untargeted().unwrap().flips(), &[(2, 5), (0, 1)]);
    }

    #[test]
    fn malformed_lines_report_position() {
        for bad in [
            "0 1 2\n",
            "0\n",
            "a b\n",
            "3 3\n",
            "0 1\n1 0\n",
            "# target: x\n",
        ] {
            let e = PerturbationFile::parse(bad, "p.txt").unwrap_err();
            assert!(matches!(e, Error::Parse { .. }), "{bad:?} gave {e:?}");
        }
        let e = PerturbationFile::parse("0 1\n\n2 2\n", "p.txt").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
    }
}
