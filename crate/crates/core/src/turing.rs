//! Nondeterministic Turing machines with two read-only input tapes and one
//! bounded work tape.
//!
//! Tape conventions used throughout the crate:
//! * the primary input tape holds a word `alpha`; the head ranges over
//!   `0..=|alpha|` and reads the blank symbol at position `|alpha|`;
//! * the secondary input tape (the "stack" tape of gadget consumers) holds a
//!   word `w` with the same end-of-word convention;
//! * the work tape has exactly `s` cells, all initially blank; moves that
//!   would leave `0..s` are unavailable.
//!
//! A transition fires only when all three read symbols match and all three
//! moved head positions stay in bounds.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MachineError {
    #[error("machine parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("transition {index} references undeclared {what} `{token}`")]
    Undeclared {
        index: usize,
        what: &'static str,
        token: String,
    },
    #[error("transition {index} has head move {mv} outside -1..=1")]
    BadMove { index: usize, mv: i64 },
    #[error("machine has no states")]
    NoStates,
    #[error("blank symbol `_` missing from alphabet")]
    NoBlank,
}

/// Head movement, one of -1, 0, +1.
pub type Move = i8;

/// A single transition of the relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub state: usize,
    pub read_in: usize,
    pub read_stk: usize,
    pub read_wk: usize,
    pub next: usize,
    pub write_wk: usize,
    pub mv_in: Move,
    pub mv_stk: Move,
    pub mv_wk: Move,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuringMachine {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub blank: usize,
    pub init: usize,
    pub accept: BTreeSet<usize>,
    pub transitions: Vec<Transition>,
}

/// A full machine configuration at some instant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub state: usize,
    pub pos_in: usize,
    pub pos_stk: usize,
    pub pos_wk: usize,
    pub work: Vec<usize>,
}

impl TuringMachine {
    pub fn validate(&self) -> Result<(), MachineError> {
        if self.states.is_empty() {
            return Err(MachineError::NoStates);
        }
        if self.blank >= self.alphabet.len() || self.alphabet[self.blank] != "_" {
            return Err(MachineError::NoBlank);
        }
        for (i, t) in self.transitions.iter().enumerate() {
            for (what, idx, bound) in [
                ("state", t.state, self.states.len()),
                ("state", t.next, self.states.len()),
                ("symbol", t.read_in, self.alphabet.len()),
                ("symbol", t.read_stk, self.alphabet.len()),
                ("symbol", t.read_wk, self.alphabet.len()),
                ("symbol", t.write_wk, self.alphabet.len()),
            ] {
                if idx >= bound {
                    return Err(MachineError::Undeclared {
                        index: i,
                        what,
                        token: format!("#{}", idx),
                    });
                }
            }
            for mv in [t.mv_in, t.mv_stk, t.mv_wk] {
                if !(-1..=1).contains(&mv) {
                    return Err(MachineError::BadMove {
                        index: i,
                        mv: mv as i64,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn symbol_index(&self, token: &str) -> Option<usize> {
        self.alphabet.iter().position(|s| s == token)
    }

    pub fn state_index(&self, token: &str) -> Option<usize> {
        self.states.iter().position(|s| s == token)
    }

    /// Initial configuration for a work tape of `s` cells.
    pub fn initial_configuration(&self, s: usize) -> Configuration {
        Configuration {
            state: self.init,
            pos_in: 0,
            pos_stk: 0,
            pos_wk: 0,
            work: vec![self.blank; s],
        }
    }

    fn read(word: &[usize], pos: usize, blank: usize) -> usize {
        word.get(pos).copied().unwrap_or(blank)
    }

    /// All configurations reachable from `c` in one step on inputs
    /// `alpha` / `w` with a work tape of `c.work.len()` cells.
    pub fn successors(&self, c: &Configuration, alpha: &[usize], w: &[usize]) -> Vec<Configuration> {
        let mut out = Vec::new();
        let s = c.work.len();
        let a_in = Self::read(alpha, c.pos_in, self.blank);
        let a_stk = Self::read(w, c.pos_stk, self.blank);
        let a_wk = if s == 0 {
            self.blank
        } else {
            c.work[c.pos_wk]
        };
        for t in &self.transitions {
            if t.state != c.state || t.read_in != a_in || t.read_stk != a_stk || t.read_wk != a_wk {
                continue;
            }
            let ni = c.pos_in as i64 + t.mv_in as i64;
            let ns = c.pos_stk as i64 + t.mv_stk as i64;
            let nw = c.pos_wk as i64 + t.mv_wk as i64;
            if ni < 0 || ni > alpha.len() as i64 || ns < 0 || ns > w.len() as i64 {
                continue;
            }
            if s == 0 {
                if nw != 0 {
                    continue;
                }
            } else if nw < 0 || nw >= s as i64 {
                continue;
            }
            let mut work = c.work.clone();
            if s > 0 {
                work[c.pos_wk] = t.write_wk;
            }
            out.push(Configuration {
                state: t.next,
                pos_in: ni as usize,
                pos_stk: ns as usize,
                pos_wk: nw as usize,
                work,
            });
        }
        out
    }

    /// Breadth-first enumeration of everything reachable from `from` within
    /// `max_steps` steps; the map remembers the step count of first arrival.
    ///
    /// This is the reference ground truth the gadget tests compare against.
    pub fn reachable_within(
        &self,
        from: &Configuration,
        alpha: &[usize],
        w: &[usize],
        max_steps: usize,
    ) -> HashMap<Configuration, usize> {
        let mut dist = HashMap::new();
        dist.insert(from.clone(), 0usize);
        let mut queue = VecDeque::new();
        queue.push_back(from.clone());
        while let Some(c) = queue.pop_front() {
            let d = dist[&c];
            if d == max_steps {
                continue;
            }
            for nc in self.successors(&c, alpha, w) {
                if !dist.contains_key(&nc) {
                    dist.insert(nc.clone(), d + 1);
                    queue.push_back(nc);
                }
            }
        }
        dist
    }

    /// Parses the section-based text format:
    ///
    /// ```text
    /// states: q0 q1 q2
    /// alphabet: 0 1 _
    /// init: q0
    /// accept: q2
    /// q0 0 _ _ -> q1 _ +1 0 0
    /// ```
    ///
    /// One transition per line: `<q> <a_in> <a_stk> <a_wk> -> <q'> <write_wk>
    /// <d_in> <d_stk> <d_wk>` with each move in `{-1, 0, +1}`.
    pub fn parse(input: &str) -> Result<Self, MachineError> {
        let body = SectionedMachine::parse(input, false)?;
        body.into_turing()
    }
}

impl fmt::Display for TuringMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}", self.states.join(" "))?;
        writeln!(f, "alphabet: {}", self.alphabet.join(" "))?;
        writeln!(f, "init: {}", self.states[self.init])?;
        let acc: Vec<&str> = self.accept.iter().map(|&i| self.states[i].as_str()).collect();
        writeln!(f, "accept: {}", acc.join(" "))?;
        for t in &self.transitions {
            writeln!(
                f,
                "{} {} {} {} -> {} {} {} {} {}",
                self.states[t.state],
                self.alphabet[t.read_in],
                self.alphabet[t.read_stk],
                self.alphabet[t.read_wk],
                self.states[t.next],
                self.alphabet[t.write_wk],
                fmt_move(t.mv_in),
                fmt_move(t.mv_stk),
                fmt_move(t.mv_wk),
            )?;
        }
        Ok(())
    }
}

pub(crate) fn fmt_move(mv: Move) -> String {
    match mv {
        1 => "+1".to_string(),
        v => v.to_string(),
    }
}

/// Shared parsing backbone for plain machines and the stack-machine
/// extension (which appends a stack-op token and a `meta:` section).
pub(crate) struct SectionedMachine {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub init: String,
    pub accept: Vec<String>,
    /// Raw transition token rows, with the stack-op token split off if the
    /// extended grammar is enabled.
    pub rows: Vec<(usize, Vec<String>, Option<String>)>,
    pub meta: Vec<(String, String)>,
}

impl SectionedMachine {
    pub fn parse(input: &str, extended: bool) -> Result<Self, MachineError> {
        let mut states = None;
        let mut alphabet = None;
        let mut init = None;
        let mut accept = None;
        let mut meta = Vec::new();
        let mut rows = Vec::new();
        for (i, raw) in input.lines().enumerate() {
            let line = raw.trim();
            let lineno = i + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("states:") {
                states = Some(rest.split_whitespace().map(String::from).collect());
            } else if let Some(rest) = line.strip_prefix("alphabet:") {
                alphabet = Some(rest.split_whitespace().map(String::from).collect());
            } else if let Some(rest) = line.strip_prefix("init:") {
                init = Some(rest.trim().to_string());
            } else if let Some(rest) = line.strip_prefix("accept:") {
                accept = Some(rest.split_whitespace().map(String::from).collect());
            } else if let Some(rest) = line.strip_prefix("meta:") {
                for pair in rest.split_whitespace() {
                    let (k, v) = pair.split_once('=').ok_or(MachineError::Parse {
                        line: lineno,
                        msg: format!("bad meta entry `{}` (want key=value)", pair),
                    })?;
                    meta.push((k.to_string(), v.to_string()));
                }
            } else {
                let mut toks: Vec<String> = line.split_whitespace().map(String::from).collect();
                let arrow = toks.iter().position(|t| t == "->").ok_or(MachineError::Parse {
                    line: lineno,
                    msg: "transition line missing `->`".into(),
                })?;
                let expected = if extended { 6 } else { 5 };
                if arrow != 4 || toks.len() != 5 + expected {
                    return Err(MachineError::Parse {
                        line: lineno,
                        msg: format!(
                            "transition needs 4 tokens, `->`, then {} tokens",
                            expected
                        ),
                    });
                }
                let op = if extended { toks.pop() } else { None };
                toks.remove(arrow);
                rows.push((lineno, toks, op));
            }
        }
        Ok(SectionedMachine {
            states: states.ok_or(MachineError::Parse {
                line: 0,
                msg: "missing `states:` section".into(),
            })?,
            alphabet: alphabet.ok_or(MachineError::Parse {
                line: 0,
                msg: "missing `alphabet:` section".into(),
            })?,
            init: init.ok_or(MachineError::Parse {
                line: 0,
                msg: "missing `init:` section".into(),
            })?,
            accept: accept.ok_or(MachineError::Parse {
                line: 0,
                msg: "missing `accept:` section".into(),
            })?,
            rows,
            meta,
        })
    }

    pub fn into_turing(self) -> Result<TuringMachine, MachineError> {
        let lookup_state = |tok: &str, line: usize| {
            self.states
                .iter()
                .position(|s| s == tok)
                .ok_or(MachineError::Parse {
                    line,
                    msg: format!("undeclared state `{}`", tok),
                })
        };
        let lookup_sym = |tok: &str, line: usize| {
            self.alphabet
                .iter()
                .position(|s| s == tok)
                .ok_or(MachineError::Parse {
                    line,
                    msg: format!("undeclared symbol `{}`", tok),
                })
        };
        let mut transitions = Vec::new();
        for (line, toks, _) in &self.rows {
            transitions.push(Transition {
                state: lookup_state(&toks[0], *line)?,
                read_in: lookup_sym(&toks[1], *line)?,
                read_stk: lookup_sym(&toks[2], *line)?,
                read_wk: lookup_sym(&toks[3], *line)?,
                next: lookup_state(&toks[4], *line)?,
                write_wk: lookup_sym(&toks[5], *line)?,
                mv_in: parse_move(&toks[6], *line)?,
                mv_stk: parse_move(&toks[7], *line)?,
                mv_wk: parse_move(&toks[8], *line)?,
            });
        }
        let blank = self
            .alphabet
            .iter()
            .position(|s| s == "_")
            .ok_or(MachineError::NoBlank)?;
        let init = lookup_state(&self.init, 0)?;
        let mut accept = BTreeSet::new();
        for a in &self.accept {
            accept.insert(lookup_state(a, 0)?);
        }
        let m = TuringMachine {
            states: self.states,
            alphabet: self.alphabet,
            blank,
            init,
            accept,
            transitions,
        };
        m.validate()?;
        Ok(m)
    }
}

pub(crate) fn parse_move(tok: &str, line: usize) -> Result<Move, MachineError> {
    match tok {
        "-1" => Ok(-1),
        "0" => Ok(0),
        "+1" | "1" => Ok(1),
        _ => Err(MachineError::Parse {
            line,
            msg: format!("bad head move `{}`", tok),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const WRITER: &str = "\
states: q0 q1
alphabet: 0 1 X _
init: q0
accept: q1
q0 _ _ _ -> q1 X 0 0 0
";

    #[test]
    fn parse_and_display_round_trip() {
        let m = TuringMachine::parse(WRITER).unwrap();
        let again = TuringMachine::parse(&m.to_string()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn one_symbol_writer_reaches_written_configuration() {
        let m = TuringMachine::parse(WRITER).unwrap();
        let init = m.initial_configuration(2);
        let reach = m.reachable_within(&init, &[], &[], 5);
        let x = m.symbol_index("X").unwrap();
        let target = Configuration {
            state: 1,
            pos_in: 0,
            pos_stk: 0,
            pos_wk: 0,
            work: vec![x, m.blank],
        };
        assert_eq!(reach.get(&target), Some(&1));
        // Without the write the halted configuration is unreachable.
        let bad = Configuration {
            work: vec![m.blank, m.blank],
            ..target
        };
        assert!(!reach.contains_key(&bad));
    }

    #[test]
    fn moves_outside_tape_are_unavailable() {
        let src = "\
states: a b
alphabet: _
init: a
accept: b
a _ _ _ -> b _ -1 0 0
";
        let m = TuringMachine::parse(src).unwrap();
        let init = m.initial_configuration(1);
        let reach = m.reachable_within(&init, &[], &[], 3);
        assert_eq!(reach.len(), 1, "moving left of position 0 must be blocked");
    }

    #[test]
    fn rejects_undeclared_tokens() {
        let src = "\
states: a
alphabet: _
init: a
accept: a
a _ _ Z -> a _ 0 0 0
";
        assert!(TuringMachine::parse(src).is_err());
    }
}
