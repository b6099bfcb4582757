//! Reader and writer for the sectioned text case format.
//!
//! ```text
//! [meta]
//! name = two-bus
//! s_base_mva = 1
//! v_base_kv = 6.6
//! ref_bus = 1
//! impedance_unit = pu        # or ohm
//!
//! [buses]
//! id v_min v_max p_d_mw q_d_mvar
//! 1  0.95  1.05  0      0
//! 2  0.94  1.06  1.0    0.5
//!
//! [lines]
//! from to r x s_max_mva switchable normal_status
//! 1    2  0.01 0.03 5   false      on
//!
//! [generators]
//! bus p_min p_max q_min q_max is_reference
//! 1   -10   10    -10   10    true
//!
//! [flex_units]
//! label bus p_up p_dn q_up q_dn cost_p cost_q
//! A     2   1    1    1    1    300    150
//! ```
//!
//! Table sections start with a header row naming every column exactly
//! once (any order). `#` starts a comment. An optional `[settings]` section
//! accepts `tol`, `max_iter` and `multistart`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use super::{Bus, CaseSettings, FlexUnit, Generator, Line, NetworkCase};
use crate::error::{FlexError, Result};
use crate::scalar::Scalar;

const BUS_COLUMNS: &[&str] = &["id", "v_min", "v_max", "p_d_mw", "q_d_mvar"];
const LINE_COLUMNS: &[&str] = &[
    "from",
    "to",
    "r",
    "x",
    "s_max_mva",
    "switchable",
    "normal_status",
];
const GEN_COLUMNS: &[&str] = &["bus", "p_min", "p_max", "q_min", "q_max", "is_reference"];
const FLEX_COLUMNS: &[&str] = &[
    "label", "bus", "p_up", "p_dn", "q_up", "q_dn", "cost_p", "cost_q",
];

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
enum Section {
    Meta,
    Settings,
    Buses,
    Lines,
    Generators,
    FlexUnits,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "meta" => Section::Meta,
            "settings" => Section::Settings,
            "buses" => Section::Buses,
            "lines" => Section::Lines,
            "generators" => Section::Generators,
            "flex_units" => Section::FlexUnits,
            _ => return None,
        })
    }

    fn columns(self) -> Option<&'static [&'static str]> {
        match self {
            Section::Buses => Some(BUS_COLUMNS),
            Section::Lines => Some(LINE_COLUMNS),
            Section::Generators => Some(GEN_COLUMNS),
            Section::FlexUnits => Some(FLEX_COLUMNS),
            Section::Meta | Section::Settings => None,
        }
    }
}

#[derive(Clone, Copy)]
struct Token<'a> {
    line: usize,
    column: usize,
    text: &'a str,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> FlexError {
    FlexError::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(line_no: usize, raw: &str) -> Vec<Token<'_>> {
    let content = match raw.find('#') {
        Some(pos) => &raw[..pos],
        None => raw,
    };
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in content.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token {
                    line: line_no,
                    column: s + 1,
                    text: &content[s..i],
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            line: line_no,
            column: s + 1,
            text: &content[s..],
        });
    }
    out
}

fn number(tok: Token<'_>) -> Result<f64> {
    let ok_chars = tok
        .text
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    match tok.text.parse::<f64>() {
        Ok(v) if ok_chars && v.is_finite() => Ok(v),
        _ => Err(syntax(
            tok.line,
            tok.column,
            format!("expected a finite decimal number, found {:?}", tok.text),
        )),
    }
}

fn integer(tok: Token<'_>) -> Result<usize> {
    tok.text.parse::<usize>().map_err(|_| {
        syntax(
            tok.line,
            tok.column,
            format!("expected a non-negative integer, found {:?}", tok.text),
        )
    })
}

fn boolean(tok: Token<'_>) -> Result<bool> {
    match tok.text {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(syntax(
            tok.line,
            tok.column,
            format!("expected true or false, found {:?}", tok.text),
        )),
    }
}

fn status(tok: Token<'_>) -> Result<bool> {
    match tok.text {
        "on" => Ok(true),
        "off" => Ok(false),
        _ => Err(syntax(
            tok.line,
            tok.column,
            format!("expected on or off, found {:?}", tok.text),
        )),
    }
}

struct Table<'a> {
    header: Vec<&'static str>,
    rows: Vec<Vec<Token<'a>>>,
}

impl<'a> Table<'a> {
    fn field(&self, row: &[Token<'a>], name: &str) -> Token<'a> {
        let pos = self
            .header
            .iter()
            .position(|h| *h == name)
            .expect("header validated against normative columns");
        row[pos]
    }
}

#[derive(Default)]
struct Raw<'a> {
    meta: Vec<(Token<'a>, Token<'a>)>,
    settings: Vec<(Token<'a>, Token<'a>)>,
    tables: BTreeMap<Section, Table<'a>>,
}

fn split_sections(text: &str) -> Result<Raw<'_>> {
    let mut raw = Raw::default();
    let mut seen = BTreeSet::new();
    let mut current: Option<Section> = None;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let toks = tokenize(line_no, line);
        let Some(first) = toks.first().copied() else {
            continue;
        };
        if first.text.starts_with('[') {
            if toks.len() != 1 || !first.text.ends_with(']') || first.text.len() < 3 {
                return Err(syntax(line_no, first.column, "malformed section header"));
            }
            let name = &first.text[1..first.text.len() - 1];
            let section = Section::from_name(name).ok_or_else(|| {
                syntax(line_no, first.column, format!("unknown section [{name}]"))
            })?;
            if !seen.insert(section) {
                return Err(syntax(
                    line_no,
                    first.column,
                    format!("duplicate section [{name}]"),
                ));
            }
            current = Some(section);
            continue;
        }
        let section =
            current.ok_or_else(|| syntax(line_no, first.column, "content before first section"))?;
        match section {
            Section::Meta | Section::Settings => {
                if toks.len() != 3 || toks[1].text != "=" {
                    return Err(syntax(line_no, first.column, "expected `key = value`"));
                }
                let target = if section == Section::Meta {
                    &mut raw.meta
                } else {
                    &mut raw.settings
                };
                target.push((toks[0], toks[2]));
            }
            table_section => {
                let columns = table_section.columns().expect("table section");
                match raw.tables.get_mut(&table_section) {
                    None => {
                        let mut header = Vec::with_capacity(toks.len());
                        for t in &toks {
                            let name = columns.iter().find(|c| **c == t.text).ok_or_else(|| {
                                syntax(t.line, t.column, format!("unknown column {:?}", t.text))
                            })?;
                            if header.contains(name) {
                                return Err(syntax(
                                    t.line,
                                    t.column,
                                    format!("duplicate column {:?}", t.text),
                                ));
                            }
                            header.push(*name);
                        }
                        if let Some(missing) = columns.iter().find(|c| !header.contains(c)) {
                            return Err(syntax(
                                line_no,
                                first.column,
                                format!("missing column {missing:?}"),
                            ));
                        }
                        raw.tables.insert(
                            table_section,
                            Table {
                                header,
                                rows: Vec::new(),
                            },
                        );
                    }
                    Some(table) => {
                        if toks.len() != table.header.len() {
                            return Err(syntax(
                                line_no,
                                first.column,
                                format!(
                                    "expected {} fields, found {}",
                                    table.header.len(),
                                    toks.len()
                                ),
                            ));
                        }
                        table.rows.push(toks);
                    }
                }
            }
        }
    }
    for required in [
        Section::Meta,
        Section::Buses,
        Section::Lines,
        Section::Generators,
    ] {
        if !seen.contains(&required) {
            let line = text.lines().count().max(1);
            return Err(syntax(
                line,
                1,
                format!("missing section [{}]", section_name(required)),
            ));
        }
    }
    Ok(raw)
}

fn section_name(s: Section) -> &'static str {
    match s {
        Section::Meta => "meta",
        Section::Settings => "settings",
        Section::Buses => "buses",
        Section::Lines => "lines",
        Section::Generators => "generators",
        Section::FlexUnits => "flex_units",
    }
}

/// Parses case text into a [`NetworkCase`]. Impedances given in ohm are
/// converted to p.u.; powers stay in MW / MVAr.
pub fn parse_case<T: Scalar>(text: &str) -> Result<NetworkCase<T>> {
    let raw = split_sections(text)?;
    let t = |v: f64| T::lit(v);

    let mut name = String::new();
    let mut s_base = None;
    let mut v_base = None;
    let mut ref_bus = None;
    let mut ohm = false;
    let mut meta_seen = BTreeSet::new();
    for (key, value) in &raw.meta {
        if !meta_seen.insert(key.text) {
            return Err(syntax(key.line, key.column, format!("duplicate key {:?}", key.text)));
        }
        match key.text {
            "name" => name = value.text.to_string(),
            "s_base_mva" => s_base = Some(number(*value)?),
            "v_base_kv" => v_base = Some(number(*value)?),
            "ref_bus" => ref_bus = Some(integer(*value)?),
            "impedance_unit" => {
                ohm = match value.text {
                    "pu" => false,
                    "ohm" => true,
                    other => {
                        return Err(syntax(
                            value.line,
                            value.column,
                            format!("impedance_unit must be pu or ohm, found {other:?}"),
                        ))
                    }
                }
            }
            other => {
                return Err(syntax(
                    key.line,
                    key.column,
                    format!("unknown [meta] key {other:?}"),
                ))
            }
        }
    }
    let missing = |k: &str| syntax(1, 1, format!("[meta] is missing {k}"));
    let s_base = s_base.ok_or_else(|| missing("s_base_mva"))?;
    let v_base = v_base.ok_or_else(|| missing("v_base_kv"))?;
    let ref_bus = ref_bus.ok_or_else(|| missing("ref_bus"))?;
    if s_base <= 0.0 || v_base <= 0.0 {
        return Err(FlexError::Semantic(
            "s_base_mva and v_base_kv must be positive".into(),
        ));
    }

    let mut settings = CaseSettings::default();
    for (key, value) in &raw.settings {
        match key.text {
            "tol" => settings.tol = Some(number(*value)?),
            "max_iter" => settings.max_iter = Some(integer(*value)?),
            "multistart" => settings.multistart = Some(integer(*value)?),
            other => {
                return Err(syntax(
                    key.line,
                    key.column,
                    format!("unknown [settings] key {other:?}"),
                ))
            }
        }
    }

    let empty = Table {
        header: Vec::new(),
        rows: Vec::new(),
    };
    let table = |s: Section| raw.tables.get(&s).unwrap_or(&empty);

    let buses_t = table(Section::Buses);
    let mut buses = Vec::with_capacity(buses_t.rows.len());
    for row in &buses_t.rows {
        buses.push(Bus {
            id: integer(buses_t.field(row, "id"))?,
            v_min: t(number(buses_t.field(row, "v_min"))?),
            v_max: t(number(buses_t.field(row, "v_max"))?),
            p_d: t(number(buses_t.field(row, "p_d_mw"))?),
            q_d: t(number(buses_t.field(row, "q_d_mvar"))?),
        });
    }
    let mut ids = BTreeSet::new();
    for b in &buses {
        if !ids.insert(b.id) {
            return Err(FlexError::Semantic(format!("duplicate bus id {}", b.id)));
        }
    }
    if !ids.contains(&ref_bus) {
        return Err(FlexError::Semantic(format!(
            "ref_bus references nonexistent bus {ref_bus}"
        )));
    }
    let check_bus = |id: usize, what: String| -> Result<()> {
        if ids.contains(&id) {
            Ok(())
        } else {
            Err(FlexError::Semantic(format!(
                "{what} references nonexistent bus {id}"
            )))
        }
    };

    let z_base = v_base * v_base / s_base;
    let lines_t = table(Section::Lines);
    let mut lines = Vec::with_capacity(lines_t.rows.len());
    for row in &lines_t.rows {
        let from = integer(lines_t.field(row, "from"))?;
        let to = integer(lines_t.field(row, "to"))?;
        let mut r = number(lines_t.field(row, "r"))?;
        let mut x = number(lines_t.field(row, "x"))?;
        if ohm {
            r /= z_base;
            x /= z_base;
        }
        let line_no = row[0].line;
        check_bus(from, format!("line at input line {line_no}"))?;
        check_bus(to, format!("line at input line {line_no}"))?;
        if r.abs() + x.abs() == 0.0 {
            return Err(FlexError::Semantic(format!(
                "line {from}-{to} has zero impedance"
            )));
        }
        lines.push(Line {
            from_bus: from,
            to_bus: to,
            r: t(r),
            x: t(x),
            s_max: t(number(lines_t.field(row, "s_max_mva"))?),
            switchable: boolean(lines_t.field(row, "switchable"))?,
            normal_status: status(lines_t.field(row, "normal_status"))?,
        });
    }

    let gens_t = table(Section::Generators);
    let mut generators = Vec::with_capacity(gens_t.rows.len());
    for row in &gens_t.rows {
        let bus = integer(gens_t.field(row, "bus"))?;
        check_bus(bus, format!("generator at input line {}", row[0].line))?;
        generators.push(Generator {
            bus,
            p_min: t(number(gens_t.field(row, "p_min"))?),
            p_max: t(number(gens_t.field(row, "p_max"))?),
            q_min: t(number(gens_t.field(row, "q_min"))?),
            q_max: t(number(gens_t.field(row, "q_max"))?),
            is_reference: boolean(gens_t.field(row, "is_reference"))?,
        });
    }
    match generators.iter().filter(|g| g.is_reference).count() {
        0 => return Err(FlexError::Semantic("missing reference generator".into())),
        1 => {}
        n => {
            return Err(FlexError::Semantic(format!(
                "{n} reference generators; exactly one is required"
            )))
        }
    }

    let flex_t = table(Section::FlexUnits);
    let mut flex_units = Vec::with_capacity(flex_t.rows.len());
    for row in &flex_t.rows {
        let label = flex_t.field(row, "label").text.to_string();
        let bus = integer(flex_t.field(row, "bus"))?;
        check_bus(bus, format!("flex unit {label}"))?;
        flex_units.push(FlexUnit {
            label,
            bus,
            p_up_max: t(number(flex_t.field(row, "p_up"))?),
            p_dn_max: t(number(flex_t.field(row, "p_dn"))?),
            q_up_max: t(number(flex_t.field(row, "q_up"))?),
            q_dn_max: t(number(flex_t.field(row, "q_dn"))?),
            cost_p: t(number(flex_t.field(row, "cost_p"))?),
            cost_q: t(number(flex_t.field(row, "cost_q"))?),
        });
    }

    Ok(NetworkCase {
        name,
        s_base: t(s_base),
        v_base: t(v_base),
        ref_bus,
        buses,
        lines,
        generators,
        flex_units,
        settings,
    })
}

/// Writes a case back to text (impedances in p.u.). Parsing the output
/// reproduces the same [`NetworkCase`].
pub fn to_case_text<T: Scalar>(case: &NetworkCase<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[meta]");
    if !case.name.is_empty() {
        let _ = writeln!(s, "name = {}", case.name);
    }
    let _ = writeln!(s, "s_base_mva = {}", case.s_base);
    let _ = writeln!(s, "v_base_kv = {}", case.v_base);
    let _ = writeln!(s, "ref_bus = {}", case.ref_bus);
    let _ = writeln!(s, "impedance_unit = pu");
    if !case.settings.is_empty() {
        let _ = writeln!(s, "\n[settings]");
        if let Some(v) = case.settings.tol {
            let _ = writeln!(s, "tol = {v:e}");
        }
        if let Some(v) = case.settings.max_iter {
            let _ = writeln!(s, "max_iter = {v}");
        }
        if let Some(v) = case.settings.multistart {
            let _ = writeln!(s, "multistart = {v}");
        }
    }
    let _ = writeln!(s, "\n[buses]\n{}", BUS_COLUMNS.join(" "));
    for b in &case.buses {
        let _ = writeln!(s, "{} {} {} {} {}", b.id, b.v_min, b.v_max, b.p_d, b.q_d);
    }
    let _ = writeln!(s, "\n[lines]\n{}", LINE_COLUMNS.join(" "));
    for l in &case.lines {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {}",
            l.from_bus,
            l.to_bus,
            l.r,
            l.x,
            l.s_max,
            l.switchable,
            if l.normal_status { "on" } else { "off" }
        );
    }
    let _ = writeln!(s, "\n[generators]\n{}", GEN_COLUMNS.join(" "));
    for g in &case.generators {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            g.bus, g.p_min, g.p_max, g.q_min, g.q_max, g.is_reference
        );
    }
    let _ = writeln!(s, "\n[flex_units]\n{}", FLEX_COLUMNS.join(" "));
    for u in &case.flex_units {
        let _ = writeln!(
            s,
            "{} {} {} {} {} {} {} {}",
            u.label, u.bus, u.p_up_max, u.p_dn_max, u.q_up_max, u.q_dn_max, u.cost_p, u.cost_q
        );
    }
    s
}
