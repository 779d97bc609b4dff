//! Parser for teach-pendant listings.
//!
//! Accepts the listing layout printed by the controller: a `/PROG` header,
//! numbered statement lines (`  7: L PR[80] ...`), continuation lines that
//! begin with `:`, empty numbered lines, optional trailing `;`, and `/END`.
//! Line numbers are not interpreted.

use std::collections::BTreeMap;

use super::ast::{RegRef, Target, Termination, TpProgram, TpStatement};
use crate::error::ParseError;

/// Vision registers available on the controller.
pub const VR_COUNT: u16 = 10;
/// Position registers available on the controller.
pub const PR_COUNT: u16 = 100;

pub fn parse(source: &str) -> Result<TpProgram, ParseError> {
    let mut name: Option<String> = None;
    let mut ended = false;
    // (source line, statement text)
    let mut logical: Vec<(usize, String)> = Vec::new();

    for (i, raw) in source.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if ended {
            return Err(ParseError::new(line_no, "content after /END"));
        }
        if let Some(rest) = line.strip_prefix("/PROG") {
            if name.is_some() {
                return Err(ParseError::new(line_no, "duplicate /PROG header"));
            }
            let n = rest.split_whitespace().next().unwrap_or("");
            if n.is_empty() {
                return Err(ParseError::new(line_no, "missing program name"));
            }
            name = Some(n.to_string());
            continue;
        }
        if name.is_none() {
            return Err(ParseError::new(line_no, "expected /PROG header"));
        }
        if line == "/MN" {
            continue;
        }
        if line == "/END" {
            ended = true;
            continue;
        }
        if line.starts_with('/') {
            return Err(ParseError::new(
                line_no,
                format!("unsupported section {line}"),
            ));
        }
        if let Some(cont) = line.strip_prefix(':') {
            let Some(last) = logical.last_mut() else {
                return Err(ParseError::new(
                    line_no,
                    "continuation line without a statement",
                ));
            };
            last.1.push(' ');
            last.1.push_str(strip_terminator(cont));
            continue;
        }
        let Some((num, body)) = line.split_once(':') else {
            return Err(ParseError::new(
                line_no,
                "expected a numbered statement line",
            ));
        };
        if num.trim().is_empty() || !num.trim().bytes().all(|b| b.is_ascii_digit()) {
            return Err(ParseError::new(
                line_no,
                format!("bad line number '{}'", num.trim()),
            ));
        }
        let body = strip_terminator(body);
        if !body.is_empty() {
            logical.push((line_no, body.to_string()));
        }
    }

    let name = name.ok_or_else(|| ParseError::new(1, "expected /PROG header"))?;
    if !ended {
        let last = source.lines().count().max(1);
        return Err(ParseError::new(last, "missing /END"));
    }

    let mut statements = Vec::with_capacity(logical.len());
    let mut label_index = BTreeMap::new();
    for (line_no, text) in &logical {
        let stmt = parse_statement(text).map_err(|reason| ParseError::new(*line_no, reason))?;
        if let TpStatement::Label { n } = stmt {
            if label_index.insert(n, statements.len()).is_some() {
                return Err(ParseError::new(
                    *line_no,
                    format!("duplicate label LBL[{n}]"),
                ));
            }
        }
        statements.push(stmt);
    }
    for ((line_no, _), stmt) in logical.iter().zip(&statements) {
        let target = match stmt {
            TpStatement::Jump { n } => Some(*n),
            TpStatement::IfDiJump { jump_label, .. } => Some(*jump_label),
            TpStatement::VisionGetOffset { jump_label, .. } => Some(*jump_label),
            _ => None,
        };
        if let Some(n) = target {
            if !label_index.contains_key(&n) {
                return Err(ParseError::new(
                    *line_no,
                    format!("jump to undefined LBL[{n}]"),
                ));
            }
        }
    }
    Ok(TpProgram {
        name,
        statements,
        label_index,
    })
}

fn strip_terminator(s: &str) -> &str {
    let s = s.trim();
    s.strip_suffix(';').unwrap_or(s).trim_end()
}

/// Parses a single statement body (no line number).
pub fn parse_statement(text: &str) -> Result<TpStatement, String> {
    let mut c = Cursor::new(text);
    let stmt = if c.eat("DO") {
        let r = c.reg_ref()?;
        c.expect("=")?;
        let value = c.on_off()?;
        TpStatement::SetDo {
            index: r.index,
            label: r.comment,
            value,
        }
    } else if c.eat_word("WAIT") {
        let seconds = c.number()?;
        c.expect("(sec)")?;
        TpStatement::Wait { seconds }
    } else if c.eat_word("VISION") {
        if c.eat_word("RUN_FIND") {
            TpStatement::VisionRunFind {
                process: c.quoted()?,
            }
        } else if c.eat_word("GET_OFFSET") {
            let process = c.quoted()?;
            c.expect("VR")?;
            let vr = c.reg_ref()?.index;
            check_vr(vr)?;
            c.expect_word("JMP")?;
            let jump_label = c.label_ref()?;
            TpStatement::VisionGetOffset {
                process,
                vr_index: vr,
                jump_label,
            }
        } else {
            return Err("expected RUN_FIND or GET_OFFSET".into());
        }
    } else if c.peek_is("LBL") {
        TpStatement::Label { n: c.label_ref()? }
    } else if c.eat_word("JMP") {
        TpStatement::Jump { n: c.label_ref()? }
    } else if c.eat_word("IF") {
        c.expect("DI")?;
        let di = c.reg_ref()?;
        c.expect("=")?;
        let value = c.on_off()?;
        c.expect(",")?;
        c.expect_word("JMP")?;
        TpStatement::IfDiJump {
            di,
            value,
            jump_label: c.label_ref()?,
        }
    } else if c.eat("UFRAME_NUM") {
        c.expect("=")?;
        TpStatement::SetUFrame { n: c.small_int()? }
    } else if c.eat("UTOOL_NUM") {
        c.expect("=")?;
        TpStatement::SetUTool { n: c.small_int()? }
    } else if c.eat_word("J") {
        let target = c.target()?;
        let speed_pct = c.number()?;
        c.expect("%")?;
        if !(speed_pct > 0.0 && speed_pct <= 100.0) {
            return Err(format!("joint speed {speed_pct}% out of range"));
        }
        let term = c.termination()?;
        TpStatement::MotionJoint {
            target,
            speed_pct,
            term,
        }
    } else if c.eat_word("L") {
        let target = c.target()?;
        let speed_mm_s = c.number()?;
        c.expect("mm/sec")?;
        if !(speed_mm_s > 0.0) {
            return Err("linear speed must be positive".into());
        }
        let term = c.termination()?;
        let mut voffset_vr = None;
        let mut offset_pr = None;
        loop {
            if c.eat("VOFFSET") {
                c.expect(",")?;
                c.expect("VR")?;
                let vr = c.reg_ref()?.index;
                check_vr(vr)?;
                voffset_vr = Some(vr);
            } else if c.eat("Offset") {
                c.expect(",")?;
                c.expect("PR")?;
                let pr = c.reg_ref()?;
                check_pr(pr.index)?;
                offset_pr = Some(pr);
            } else {
                break;
            }
        }
        TpStatement::MotionLinear {
            target,
            speed_mm_s,
            term,
            voffset_vr,
            offset_pr,
        }
    } else {
        return Err(format!("unrecognized statement '{text}'"));
    };
    c.skip_ws();
    if !c.rest().is_empty() {
        return Err(format!("unexpected trailing text '{}'", c.rest()));
    }
    Ok(stmt)
}

fn check_vr(n: u16) -> Result<(), String> {
    if (1..=VR_COUNT).contains(&n) {
        Ok(())
    } else {
        Err(format!("VR[{n}] outside register file 1..={VR_COUNT}"))
    }
}

fn check_pr(n: u16) -> Result<(), String> {
    if (1..=PR_COUNT).contains(&n) {
        Ok(())
    } else {
        Err(format!("PR[{n}] outside register file 1..={PR_COUNT}"))
    }
}

struct Cursor<'a> {
    s: &'a str,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s: s.trim() }
    }

    fn rest(&self) -> &'a str {
        self.s
    }

    fn skip_ws(&mut self) {
        self.s = self.s.trim_start();
    }

    fn peek_is(&mut self, lit: &str) -> bool {
        self.skip_ws();
        self.s.starts_with(lit)
    }

    fn eat(&mut self, lit: &str) -> bool {
        self.skip_ws();
        match self.s.strip_prefix(lit) {
            Some(rest) => {
                self.s = rest;
                true
            }
            None => false,
        }
    }

    /// Like `eat`, but the literal must end at a word boundary.
    fn eat_word(&mut self, word: &str) -> bool {
        self.skip_ws();
        match self.s.strip_prefix(word) {
            Some(rest)
                if rest.is_empty()
                    || !rest.starts_with(|c: char| c.is_alphanumeric() || c == '_') =>
            {
                self.s = rest;
                true
            }
            _ => false,
        }
    }

    fn expect(&mut self, lit: &str) -> Result<(), String> {
        if self.eat(lit) {
            Ok(())
        } else {
            Err(format!("expected '{lit}' at '{}'", self.s))
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<(), String> {
        if self.eat_word(word) {
            Ok(())
        } else {
            Err(format!("expected '{word}' at '{}'", self.s))
        }
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let end = self.s.find(|c: char| !f(c)).unwrap_or(self.s.len());
        let (head, tail) = self.s.split_at(end);
        self.s = tail;
        head
    }

    fn uint(&mut self) -> Result<u16, String> {
        self.skip_ws();
        let digits = self.take_while(|c| c.is_ascii_digit());
        if digits.is_empty() {
            return Err(format!("expected an index at '{}'", self.s));
        }
        digits
            .parse()
            .map_err(|_| format!("index {digits} too large"))
    }

    fn small_int(&mut self) -> Result<u8, String> {
        let n = self.uint()?;
        u8::try_from(n).map_err(|_| format!("value {n} too large"))
    }

    fn number(&mut self) -> Result<f64, String> {
        self.skip_ws();
        let text = self.take_while(|c| c.is_ascii_digit() || c == '.');
        if text.is_empty() || text == "." {
            return Err(format!("expected a number at '{}'", self.s));
        }
        text.parse().map_err(|_| format!("bad number '{text}'"))
    }

    /// `[n]` or `[n:comment]`.
    fn reg_ref(&mut self) -> Result<RegRef, String> {
        if !self.s.starts_with('[') {
            return Err(format!("expected '[' at '{}'", self.s));
        }
        self.s = &self.s[1..];
        let index = self.uint()?;
        let comment = if self.s.starts_with(':') {
            let close = self
                .s
                .find(']')
                .ok_or_else(|| "unterminated register comment".to_string())?;
            let c = self.s[1..close].to_string();
            self.s = &self.s[close..];
            Some(c)
        } else {
            None
        };
        if !self.s.starts_with(']') {
            return Err(format!("expected ']' at '{}'", self.s));
        }
        self.s = &self.s[1..];
        Ok(RegRef { index, comment })
    }

    fn label_ref(&mut self) -> Result<u16, String> {
        self.expect("LBL")?;
        Ok(self.reg_ref()?.index)
    }

    fn quoted(&mut self) -> Result<String, String> {
        self.skip_ws();
        let rest = self
            .s
            .strip_prefix('\'')
            .ok_or_else(|| format!("expected quoted name at '{}'", self.s))?;
        let close = rest
            .find('\'')
            .ok_or_else(|| "unterminated quote".to_string())?;
        let name = rest[..close].to_string();
        if name.is_empty() {
            return Err("empty vision process name".into());
        }
        self.s = &rest[close + 1..];
        Ok(name)
    }

    fn on_off(&mut self) -> Result<bool, String> {
        if self.eat_word("ON") {
            Ok(true)
        } else if self.eat_word("OFF") {
            Ok(false)
        } else {
            Err(format!("expected ON or OFF at '{}'", self.s))
        }
    }

    fn target(&mut self) -> Result<Target, String> {
        if self.eat("PR") {
            let r = self.reg_ref()?;
            check_pr(r.index)?;
            Ok(Target::Pr(r))
        } else if self.eat("P") {
            Ok(Target::P(self.reg_ref()?.index))
        } else {
            Err(format!("expected motion target at '{}'", self.s))
        }
    }

    fn termination(&mut self) -> Result<Termination, String> {
        if self.eat_word("FINE") {
            Ok(Termination::Fine)
        } else if self.eat("CNT") {
            let n = self.small_int()?;
            if n > 100 {
                return Err(format!("CNT{n} out of range"));
            }
            Ok(Termination::Cnt(n))
        } else {
            Err(format!("expected FINE or CNTn at '{}'", self.s))
        }
    }
}
