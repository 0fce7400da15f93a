//! Plain-text generator files.
//!
//! Grammar shared by both kinds: `#` starts a comment that runs to the end of
//! the line, blank lines are skipped, and all remaining tokens are unsigned
//! decimal integers.
//!
//! Lattice file:
//! ```text
//! d
//! n_max
//! g_1
//! ...
//! g_d
//! ```
//!
//! Digital net file:
//! ```text
//! d
//! p_max
//! t
//! c_{1,0} c_{1,1} ... c_{1,p_max-1}
//! ...
//! c_{d,0} ... c_{d,p_max-1}
//! ```
//! where the most significant of the `t` bits of `c_{j,p}` is the first binary
//! digit of column `p` of the generating matrix for dimension `j`.

use std::path::Path;
use std::sync::OnceLock;

use super::{DigitalNetGen, LatticeGen, SeqKind};
use crate::error::{Error, Result};

const DEFAULT_LATTICE: &str = include_str!("../../assets/kuo_lattice_1024.txt");
const DEFAULT_NET: &str = include_str!("../../assets/joe_kuo_net_1024.txt");

/// A parsed generator file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LdData {
    Lattice(LatticeGen),
    Net(DigitalNetGen),
}

/// Non-empty lines with comments stripped, paired with 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(k, line)| {
        let body = line.split('#').next().unwrap_or("");
        let toks: Vec<&str> = body.split_whitespace().collect();
        (!toks.is_empty()).then_some((k + 1, toks))
    })
}

fn parse_u64(tok: &str, line: usize) -> Result<u64> {
    tok.parse::<u64>().map_err(|e| Error::Parse {
        line,
        msg: format!("`{tok}`: {e}"),
    })
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, Vec<&'a str>)>,
    name: &str,
    last_line: &mut usize,
) -> Result<u64> {
    let (line, toks) = lines.next().ok_or_else(|| Error::Parse {
        line: *last_line + 1,
        msg: format!("missing {name}"),
    })?;
    *last_line = line;
    if toks.len() != 1 {
        return Err(Error::Parse {
            line,
            msg: format!("expected a single integer for {name}"),
        });
    }
    parse_u64(toks[0], line)
}

/// Parse generator text of the given kind.
pub fn parse_ld_str(text: &str, kind: SeqKind) -> Result<LdData> {
    let mut lines = data_lines(text);
    let mut last = 0usize;
    let d = header(&mut lines, "dimension", &mut last)? as usize;
    if d == 0 {
        return Err(Error::Parse {
            line: last,
            msg: "dimension must be positive".into(),
        });
    }
    let out = match kind {
        SeqKind::Lattice => {
            let n_max = header(&mut lines, "n_max", &mut last)?;
            let mut g = Vec::with_capacity(d);
            for j in 0..d {
                let v = header(&mut lines, &format!("component {}", j + 1), &mut last)?;
                g.push(v);
            }
            LdData::Lattice(LatticeGen::new(g, n_max).map_err(|e| Error::Parse {
                line: last,
                msg: e.to_string(),
            })?)
        }
        SeqKind::Net => {
            let p_max = header(&mut lines, "number of columns", &mut last)? as usize;
            let t = header(&mut lines, "precision", &mut last)? as u32;
            let mut columns = Vec::with_capacity(d);
            for j in 0..d {
                let (line, toks) = lines.next().ok_or_else(|| Error::Parse {
                    line: last + 1,
                    msg: format!("missing row for dimension {}", j + 1),
                })?;
                last = line;
                if toks.len() != p_max {
                    return Err(Error::Parse {
                        line,
                        msg: format!("expected {p_max} columns, found {}", toks.len()),
                    });
                }
                columns.push(
                    toks.iter()
                        .map(|t| parse_u64(t, line))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            LdData::Net(DigitalNetGen::new(columns, t).map_err(|e| Error::Parse {
                line: last,
                msg: e.to_string(),
            })?)
        }
    };
    if let Some((line, _)) = lines.next() {
        return Err(Error::Parse {
            line,
            msg: "trailing data after the last dimension".into(),
        });
    }
    Ok(out)
}

/// Read and parse a generator file.
pub fn parse_ld_data(path: impl AsRef<Path>, kind: SeqKind) -> Result<LdData> {
    let text = std::fs::read_to_string(path)?;
    parse_ld_str(&text, kind)
}

/// The embedded 1024-dimensional rank-1 lattice (n_max = 2^20).
pub fn default_lattice() -> &'static LatticeGen {
    static CELL: OnceLock<LatticeGen> = OnceLock::new();
    CELL.get_or_init(|| match parse_ld_str(DEFAULT_LATTICE, SeqKind::Lattice) {
        Ok(LdData::Lattice(g)) => g,
        other => panic!("embedded lattice asset is corrupt: {other:?}"),
    })
}

/// The embedded 1024-dimensional base-2 digital net (2^32 points, t = 32).
pub fn default_net() -> &'static DigitalNetGen {
    static CELL: OnceLock<DigitalNetGen> = OnceLock::new();
    CELL.get_or_init(|| match parse_ld_str(DEFAULT_NET, SeqKind::Net) {
        Ok(LdData::Net(g)) => g,
        other => panic!("embedded net asset is corrupt: {other:?}"),
    })
}
