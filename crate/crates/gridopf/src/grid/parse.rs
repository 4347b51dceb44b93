//! MATPOWER-style case file parser.
//!
//! Reads the plain-text `mpc.<table> = [ ... ];` matrix syntax and the
//! `mpc.baseMVA` scalar. Only the column subset needed by the per-unit model
//! is consumed; extra columns (standard in full-format files) are ignored.

use std::collections::HashMap;

use log::{debug, warn};

use super::{Branch, Bus, BusKind, Generator, NetworkCase};
use crate::error::{Error, Result};

/// One parsed matrix block, each row tagged with its source line.
#[derive(Debug, Default)]
struct RawTable {
    rows: Vec<(usize, Vec<f64>)>,
}

/// Parses MATPOWER case text into a validated [`NetworkCase`].
pub fn parse_case(text: &str) -> Result<NetworkCase> {
    let mut name = String::from("case");
    let mut base_mva: Option<f64> = None;
    let mut tables: HashMap<String, RawTable> = HashMap::new();

    let mut current: Option<String> = None; // table being read
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw_line);
        let mut rest = line.trim();

        if current.is_none() {
            if rest.is_empty() {
                continue;
            }
            if let Some(tail) = rest.strip_prefix("function") {
                if let Some(n) = tail.rsplit('=').next() {
                    let n = n.trim();
                    if !n.is_empty() {
                        name = n.to_string();
                    }
                }
                continue;
            }
            if let Some(tail) = rest.strip_prefix("mpc.") {
                let (field, after) = match tail.split_once('=') {
                    Some((f, a)) => (f.trim().to_string(), a.trim()),
                    None => continue,
                };
                if let Some(body) = after.strip_prefix('[') {
                    tables.entry(field.clone()).or_default();
                    current = Some(field);
                    rest = body.trim();
                    // fall through to the in-table branch below
                } else {
                    if field == "baseMVA" {
                        let v = after.trim_end_matches(';').trim();
                        base_mva = Some(v.parse::<f64>().map_err(|_| Error::MalformedRow {
                            line: lineno,
                            reason: format!("invalid baseMVA `{v}`"),
                        })?);
                    }
                    // other scalar/string fields (version, ...) are ignored
                    continue;
                }
            } else {
                continue;
            }
        }

        // Inside a table: rows end at ';' or end of line; ']' closes the table.
        let table = current.take().unwrap();
        let mut row = Vec::new();
        let mut text_left = rest;
        let mut closed = false;
        loop {
            let stop = text_left.find([';', ']']);
            let (chunk, delim) = match stop {
                Some(pos) => (&text_left[..pos], text_left.as_bytes()[pos]),
                None => (text_left, 0u8),
            };
            for tok in chunk.split([' ', '\t', ',']).filter(|t| !t.is_empty()) {
                row.push(tok.parse::<f64>().map_err(|_| Error::MalformedRow {
                    line: lineno,
                    reason: format!("not a number: `{tok}`"),
                })?);
            }
            if !row.is_empty() {
                tables.get_mut(&table).unwrap().rows.push((lineno, std::mem::take(&mut row)));
            }
            match delim {
                b';' => text_left = &text_left[stop.unwrap() + 1..],
                b']' => {
                    closed = true;
                    break;
                }
                _ => break, // end of line
            }
        }
        if !closed {
            current = Some(table);
        }
    }

    let base_mva = base_mva.ok_or(Error::MissingTable("baseMVA"))?;
    let bus_t = tables.remove("bus").ok_or(Error::MissingTable("bus"))?;
    let gen_t = tables.remove("gen").ok_or(Error::MissingTable("gen"))?;
    let branch_t = tables.remove("branch").ok_or(Error::MissingTable("branch"))?;
    let gencost_t = tables.remove("gencost").ok_or(Error::MissingTable("gencost"))?;
    for extra in tables.keys().filter(|k| *k != "version") {
        warn!("ignoring unrecognized table mpc.{extra}");
    }

    // --- bus table: bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
    let mut buses = Vec::with_capacity(bus_t.rows.len());
    let mut index_of = HashMap::<u32, usize>::new();
    let mut warned_bus_cols = false;
    for (line, row) in &bus_t.rows {
        if row.len() < 13 {
            return Err(Error::MalformedRow {
                line: *line,
                reason: format!("bus row has {} columns, need 13", row.len()),
            });
        }
        if row.len() > 13 && !warned_bus_cols {
            debug!("bus table has {} columns; ignoring columns beyond 13", row.len());
            warned_bus_cols = true;
        }
        let id = int_field(row[0], *line, "bus number")? as u32;
        let kind = match row[1] as i64 {
            1 => BusKind::Pq,
            2 => BusKind::Pv,
            3 => BusKind::Slack,
            t => {
                return Err(Error::MalformedRow {
                    line: *line,
                    reason: format!("unsupported bus type {t}"),
                })
            }
        };
        if index_of.insert(id, buses.len()).is_some() {
            return Err(Error::MalformedRow {
                line: *line,
                reason: format!("duplicate bus number {id}"),
            });
        }
        buses.push(Bus {
            id,
            kind,
            pd: row[2],
            qd: row[3],
            gs: row[4],
            bs: row[5],
            base_kv: row[9],
            vmin: row[12],
            vmax: row[11],
            vm0: row[7],
            va0: row[8],
        });
    }

    // --- gen table: bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin
    if gencost_t.rows.len() != gen_t.rows.len() {
        let line = gencost_t.rows.first().map_or(0, |(l, _)| *l);
        return Err(Error::MalformedRow {
            line,
            reason: format!(
                "gencost has {} rows but gen has {} (one cost row per unit required)",
                gencost_t.rows.len(),
                gen_t.rows.len()
            ),
        });
    }
    let mut generators = Vec::with_capacity(gen_t.rows.len());
    let mut warned_gen_cols = false;
    for ((line, row), (cline, crow)) in gen_t.rows.iter().zip(&gencost_t.rows) {
        if row.len() < 10 {
            return Err(Error::MalformedRow {
                line: *line,
                reason: format!("gen row has {} columns, need at least 10", row.len()),
            });
        }
        if row.len() > 10 && !warned_gen_cols {
            debug!("gen table has {} columns; ignoring columns beyond 10", row.len());
            warned_gen_cols = true;
        }
        if row[7] <= 0.0 {
            warn!("skipping out-of-service generator at bus {}", row[0]);
            continue;
        }
        let ext = int_field(row[0], *line, "gen bus")? as u32;
        let bus = *index_of
            .get(&ext)
            .ok_or(Error::DanglingReference { kind: "gen", bus: ext })?;
        generators.push(Generator {
            bus,
            pmin: row[9],
            pmax: row[8],
            qmin: row[4],
            qmax: row[3],
            cost: parse_cost(crow, *cline)?,
            pg0: row[1],
            qg0: row[2],
            vg: row[5],
        });
    }

    // --- branch table: fbus tbus r x b rateA rateB rateC ratio angle status
    let mut branches = Vec::with_capacity(branch_t.rows.len());
    let mut warned_branch_cols = false;
    for (line, row) in &branch_t.rows {
        if row.len() < 11 {
            return Err(Error::MalformedRow {
                line: *line,
                reason: format!("branch row has {} columns, need at least 11", row.len()),
            });
        }
        if row.len() > 13 && !warned_branch_cols {
            debug!("branch table has {} columns; ignoring columns beyond 13", row.len());
            warned_branch_cols = true;
        }
        if row[10] <= 0.0 {
            warn!("skipping out-of-service branch {}-{}", row[0], row[1]);
            continue;
        }
        let fext = int_field(row[0], *line, "branch from-bus")? as u32;
        let text_ = int_field(row[1], *line, "branch to-bus")? as u32;
        let from = *index_of
            .get(&fext)
            .ok_or(Error::DanglingReference { kind: "branch", bus: fext })?;
        let to = *index_of
            .get(&text_)
            .ok_or(Error::DanglingReference { kind: "branch", bus: text_ })?;
        branches.push(Branch {
            from,
            to,
            r: row[2],
            x: row[3],
            b: row[4],
            tap: row[8],
            shift: row[9],
            smax: row[5],
        });
    }

    let slot_order = (0..buses.len()).collect();
    let case = NetworkCase {
        name,
        base_mva,
        buses,
        generators,
        branches,
        slot_order,
    };
    case.validate()?;
    Ok(case)
}

/// gencost row: model startup shutdown n c(n-1) ... c0, polynomial model only.
fn parse_cost(row: &[f64], line: usize) -> Result<(f64, f64, f64)> {
    if row.len() < 4 {
        return Err(Error::MalformedRow {
            line,
            reason: "gencost row too short".into(),
        });
    }
    if row[0] as i64 != 2 {
        return Err(Error::MalformedRow {
            line,
            reason: format!("unsupported cost model {} (polynomial model 2 required)", row[0]),
        });
    }
    let n = int_field(row[3], line, "gencost n")? as usize;
    if row.len() < 4 + n {
        return Err(Error::MalformedRow {
            line,
            reason: format!("gencost row declares {n} coefficients but carries fewer"),
        });
    }
    let c = &row[4..4 + n];
    match n {
        1 => Ok((0.0, 0.0, c[0])),
        2 => Ok((0.0, c[0], c[1])),
        3 => Ok((c[0], c[1], c[2])),
        _ => Err(Error::MalformedRow {
            line,
            reason: format!("cost polynomial degree {} exceeds 2", n.saturating_sub(1)),
        }),
    }
}

fn int_field(v: f64, line: usize, what: &str) -> Result<i64> {
    if v.fract() == 0.0 && v >= 0.0 && v <= i64::MAX as f64 {
        Ok(v as i64)
    } else {
        Err(Error::MalformedRow {
            line,
            reason: format!("{what} must be a non-negative integer, got {v}"),
        })
    }
}

/// Removes a trailing `%` comment, ignoring `%` inside single-quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}
