//! Relay-ladder IR: document form, compilation against a tag database, and
//! the cyclic scan.
//!
//! Power flows left to right through a rung. A contact passes power when its
//! input power is on and its bit test holds; one-shots pass power on an edge
//! of their input power and remember it in a storage bit. Every output of a
//! rung sees the same rung condition.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::LadderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagKind {
    /// Frozen at scan start from the input image.
    Input,
    /// Published to the outside world after each scan.
    Output,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagDef {
    pub name: String,
    pub kind: TagKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
}

/// Rung logic as written in the document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    /// Examine if closed.
    Xic(String),
    /// Examine if open.
    Xio(String),
    /// Rising one-shot with its storage bit.
    Ons(String),
    /// Falling one-shot with its storage bit.
    Osf(String),
    Series(Vec<Element>),
    Parallel(Vec<Element>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputDoc {
    Ote(String),
    Otl(String),
    Otu(String),
    Ton { timer: String, preset_ms: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RungDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    /// Absent logic is an unconditional rung.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<Element>,
    pub then: Vec<OutputDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderDocument {
    pub tags: Vec<TagDef>,
    pub rungs: Vec<RungDoc>,
}

impl LadderDocument {
    pub fn from_json(text: &str) -> Result<Self, LadderError> {
        serde_json::from_str(text).map_err(|e| LadderError::Document(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ladder document serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Cell {
    Xic(usize),
    Xio(usize),
    Ons(usize),
    Osf(usize),
    Series(Vec<Cell>),
    Parallel(Vec<Cell>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Coil {
    Ote(usize),
    Otl(usize),
    Otu(usize),
    Ton { timer: usize, preset_us: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Rung {
    logic: Option<Cell>,
    coils: Vec<Coil>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Timer {
    en: usize,
    tt: usize,
    dn: usize,
}

/// A validated program with tag names resolved to slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LadderProgram {
    tags: Vec<TagDef>,
    index: BTreeMap<String, usize>,
    timer_names: Vec<String>,
    timers: Vec<Timer>,
    rungs: Vec<Rung>,
    document: LadderDocument,
}

fn rung_name(i: usize) -> String {
    format!("R{i}")
}

impl LadderProgram {
    pub fn compile(doc: &LadderDocument) -> Result<Self, LadderError> {
        let mut tags = Vec::new();
        let mut index = BTreeMap::new();
        for t in &doc.tags {
            if index.insert(t.name.clone(), tags.len()).is_some() {
                return Err(LadderError::DuplicateTag(t.name.clone()));
            }
            tags.push(t.clone());
        }

        // Timers are declared by the rung that drives them.
        let mut timer_names: Vec<String> = Vec::new();
        let mut timers = Vec::new();
        let mut timer_bits = Vec::new();
        for rung in &doc.rungs {
            for out in &rung.then {
                if let OutputDoc::Ton { timer, .. } = out {
                    if timer_names.contains(timer) {
                        continue;
                    }
                    let mut slot = |suffix: &str| -> Result<usize, LadderError> {
                        let name = format!("{timer}.{suffix}");
                        if index.contains_key(&name) {
                            return Err(LadderError::DuplicateTag(name));
                        }
                        index.insert(name.clone(), tags.len());
                        timer_bits.push(tags.len());
                        tags.push(TagDef {
                            name,
                            kind: TagKind::Internal,
                            address: None,
                            comment: None,
                        });
                        Ok(tags.len() - 1)
                    };
                    let t = Timer {
                        en: slot("EN")?,
                        tt: slot("TT")?,
                        dn: slot("DN")?,
                    };
                    timer_names.push(timer.clone());
                    timers.push(t);
                }
            }
        }

        let resolve = |rung: usize, name: &str| -> Result<usize, LadderError> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| LadderError::UnknownTag {
                    rung: rung_name(rung),
                    tag: name.to_string(),
                })
        };
        let writable = |rung: usize, slot: usize| -> Result<usize, LadderError> {
            if tags[slot].kind == TagKind::Input || timer_bits.contains(&slot) {
                return Err(LadderError::WritesInput {
                    rung: rung_name(rung),
                    tag: tags[slot].name.clone(),
                });
            }
            Ok(slot)
        };

        fn cell(
            e: &Element,
            rung: usize,
            resolve: &dyn Fn(usize, &str) -> Result<usize, LadderError>,
            writable: &dyn Fn(usize, usize) -> Result<usize, LadderError>,
        ) -> Result<Cell, LadderError> {
            Ok(match e {
                Element::Xic(t) => Cell::Xic(resolve(rung, t)?),
                Element::Xio(t) => Cell::Xio(resolve(rung, t)?),
                Element::Ons(t) => Cell::Ons(writable(rung, resolve(rung, t)?)?),
                Element::Osf(t) => Cell::Osf(writable(rung, resolve(rung, t)?)?),
                Element::Series(v) => Cell::Series(
                    v.iter()
                        .map(|e| cell(e, rung, resolve, writable))
                        .collect::<Result<_, _>>()?,
                ),
                Element::Parallel(v) => {
                    if v.is_empty() {
                        return Err(LadderError::Document(format!(
                            "rung {}: empty parallel branch",
                            rung_name(rung)
                        )));
                    }
                    Cell::Parallel(
                        v.iter()
                            .map(|e| cell(e, rung, resolve, writable))
                            .collect::<Result<_, _>>()?,
                    )
                }
            })
        }

        // Energize coils and timers may be driven by a single rung only;
        // latch/unlatch pairs are expected to be spread over rungs.
        let mut energized: BTreeMap<usize, usize> = BTreeMap::new();
        let mut latched: BTreeMap<usize, usize> = BTreeMap::new();
        let mut rungs = Vec::with_capacity(doc.rungs.len());
        for (ri, r) in doc.rungs.iter().enumerate() {
            if r.then.is_empty() {
                return Err(LadderError::Document(format!(
                    "rung {} has no outputs",
                    rung_name(ri)
                )));
            }
            let logic = r
                .when
                .as_ref()
                .map(|e| cell(e, ri, &resolve, &writable))
                .transpose()?;
            let mut coils = Vec::new();
            for out in &r.then {
                let coil = match out {
                    OutputDoc::Ote(t) => Coil::Ote(writable(ri, resolve(ri, t)?)?),
                    OutputDoc::Otl(t) => Coil::Otl(writable(ri, resolve(ri, t)?)?),
                    OutputDoc::Otu(t) => Coil::Otu(writable(ri, resolve(ri, t)?)?),
                    OutputDoc::Ton { timer, preset_ms } => Coil::Ton {
                        timer: timer_names
                            .iter()
                            .position(|n| n == timer)
                            .expect("collected above"),
                        preset_us: u64::from(*preset_ms) * 1000,
                    },
                };
                let (slot, exclusive, name) = match coil {
                    Coil::Ote(s) => (s, true, tags[s].name.clone()),
                    Coil::Otl(s) | Coil::Otu(s) => (s, false, tags[s].name.clone()),
                    Coil::Ton { timer, .. } => (timers[timer].dn, true, timer_names[timer].clone()),
                };
                let clash = if exclusive {
                    energized.get(&slot).or(latched.get(&slot)).copied()
                } else {
                    energized.get(&slot).copied()
                };
                if let Some(first) = clash.filter(|&f| f != ri) {
                    return Err(LadderError::DuplicateCoil {
                        tag: name,
                        first: rung_name(first),
                        second: rung_name(ri),
                    });
                }
                if exclusive {
                    energized.insert(slot, ri);
                } else {
                    latched.entry(slot).or_insert(ri);
                }
                coils.push(coil);
            }
            rungs.push(Rung { logic, coils });
        }

        Ok(LadderProgram {
            tags,
            index,
            timer_names,
            timers,
            rungs,
            document: doc.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, LadderError> {
        Self::compile(&LadderDocument::from_json(text)?)
    }

    pub fn document(&self) -> &LadderDocument {
        &self.document
    }

    pub fn tags(&self) -> &[TagDef] {
        &self.tags
    }

    pub fn slot(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn rung_count(&self) -> usize {
        self.rungs.len()
    }

    pub fn timer_names(&self) -> &[String] {
        &self.timer_names
    }
}

/// A tag whose value changed during a scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagChange {
    pub slot: usize,
    pub value: bool,
}

/// Controller memory for one program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlcMemory {
    values: Vec<bool>,
    input_image: Vec<bool>,
    acc_us: Vec<u64>,
}

impl PlcMemory {
    pub fn new(program: &LadderProgram) -> Self {
        PlcMemory {
            values: vec![false; program.tags.len()],
            input_image: vec![false; program.tags.len()],
            acc_us: vec![0; program.timers.len()],
        }
    }

    pub fn get(&self, slot: usize) -> bool {
        self.values[slot]
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    /// Pending value of an input, applied at the next scan.
    pub fn input(&self, slot: usize) -> bool {
        self.input_image[slot]
    }

    /// Stages an input for the next scan. Non-inputs are ignored.
    pub fn set_input(&mut self, program: &LadderProgram, slot: usize, value: bool) {
        if program.tags[slot].kind == TagKind::Input {
            self.input_image[slot] = value;
        }
    }

    pub fn timer_acc_us(&self, timer: usize) -> u64 {
        self.acc_us[timer]
    }
}

fn eval(cell: &Cell, power: bool, values: &mut [bool]) -> bool {
    match cell {
        Cell::Xic(s) => power && values[*s],
        Cell::Xio(s) => power && !values[*s],
        Cell::Ons(s) => {
            let out = power && !values[*s];
            values[*s] = power;
            out
        }
        Cell::Osf(s) => {
            let out = !power && values[*s];
            values[*s] = power;
            out
        }
        Cell::Series(v) => v.iter().fold(power, |p, c| eval(c, p, values)),
        Cell::Parallel(v) => {
            let mut any = false;
            for c in v {
                any |= eval(c, power, values);
            }
            any
        }
    }
}

/// One controller scan: freeze inputs, solve rungs top to bottom, advance
/// timers by `period_us`. Returns every tag that changed, in slot order.
pub fn scan_once(program: &LadderProgram, mem: &mut PlcMemory, period_us: u64) -> Vec<TagChange> {
    let before = mem.values.clone();
    for (slot, tag) in program.tags.iter().enumerate() {
        if tag.kind == TagKind::Input {
            mem.values[slot] = mem.input_image[slot];
        }
    }
    for rung in &program.rungs {
        let power = match &rung.logic {
            Some(c) => eval(c, true, &mut mem.values),
            None => true,
        };
        for coil in &rung.coils {
            match *coil {
                Coil::Ote(s) => mem.values[s] = power,
                Coil::Otl(s) => mem.values[s] |= power,
                Coil::Otu(s) => mem.values[s] &= !power,
                Coil::Ton { timer, preset_us } => {
                    let t = &program.timers[timer];
                    if power {
                        let acc = (mem.acc_us[timer] + period_us).min(preset_us);
                        mem.acc_us[timer] = acc;
                        mem.values[t.dn] = acc >= preset_us;
                    } else {
                        mem.acc_us[timer] = 0;
                        mem.values[t.dn] = false;
                    }
                    mem.values[t.en] = power;
                    mem.values[t.tt] = power && !mem.values[t.dn];
                }
            }
        }
    }
    before
        .iter()
        .zip(&mem.values)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(slot, (_, &value))| TagChange { slot, value })
        .collect()
}
