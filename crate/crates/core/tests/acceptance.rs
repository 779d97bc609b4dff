//! Acceptance suite. Runs every primary criterion and prints one PASS/FAIL
//! line each; exits non-zero if any fails.
//!
//! `UPDATE_GOLDEN=1` rewrites the robot-program golden traces.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use colorsort_core::arduino::{evaluate, Level};
use colorsort_core::color::{Channel, ColorClass, ColorFlags};
use colorsort_core::iobus::{pack, Direction, DoSink, ROBOT_DO_WIRING};
use colorsort_core::optics::{pixel_intensity, LightSpec};
use colorsort_core::plc::{default_program, verdict, Plc, Verdict};
use colorsort_core::sim::{run, CellParams, Engine, EventKind, Node, Scenario, SimEvent, TagValue};
use colorsort_core::tp;
use colorsort_core::trace::trace_hash;
use colorsort_core::vision::{render, run_find, FilterPosition, Scene, SceneBlock, VisionRegister};
use colorsort_core::workcell::PartState;

type Check = (bool, String);

fn check(ok: bool, what: impl Into<String>) -> Check {
    (ok, what.into())
}

struct Outcome {
    n: u8,
    title: &'static str,
    checks: Vec<Check>,
    note: String,
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> Scenario {
    let path = workspace().join("scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Scenario::from_toml(&text).unwrap()
}

// ---- vision helpers ----

fn centered_find(
    p: &CellParams,
    class: ColorClass,
    process: &str,
    filter: Channel,
    light: &LightSpec,
) -> bool {
    let o = &p.optics;
    let scene = Scene {
        belt: o.belt,
        camera_x_mm: p.conveyor.camera_x_mm,
        blocks: vec![SceneBlock {
            reflectance: o.block(class).unwrap(),
            center_mm: (p.conveyor.camera_x_mm, 0.0),
            size_mm: p.conveyor.part_size_mm,
            rotation_deg: 0.0,
        }],
    };
    let image = render(
        &scene,
        FilterPosition::Settled(o.filter_for(filter)),
        light,
        &p.camera,
    )
    .unwrap();
    run_find(&p.vision.process(process).unwrap(), &image, &p.camera)
        .unwrap()
        .found
}

const SCANS: [(&str, Channel); 3] = [
    ("REDSCAN", Channel::Red),
    ("GRNSCAN", Channel::Green),
    ("BLUSCAN", Channel::Blue),
];
const CLASSES: [ColorClass; 3] = [ColorClass::Red, ColorClass::Green, ColorClass::Blue];

fn criterion1() -> Outcome {
    let p = CellParams::default();
    let o = &p.optics;
    let ambient = o.ambient_light();
    let i = |c: ColorClass, f: Channel| {
        pixel_intensity(o.block(c).unwrap(), &o.filter_for(f), &ambient)
    };
    let gb = (i(ColorClass::Green, Channel::Green) - i(ColorClass::Blue, Channel::Green)).abs();
    let red_margin = i(ColorClass::Red, Channel::Red)
        - i(ColorClass::Green, Channel::Red).max(i(ColorClass::Blue, Channel::Red));
    let mut checks = vec![
        check(
            gb < 0.05,
            format!("|I(G,green) - I(B,green)| = {gb:.4} < 0.05"),
        ),
        check(
            red_margin > 0.25,
            format!("red filter margin {red_margin:.4} > 0.25"),
        ),
    ];
    for (process, ch) in &SCANS[1..] {
        let g = centered_find(&p, ColorClass::Green, process, *ch, &ambient);
        let b = centered_find(&p, ColorClass::Blue, process, *ch, &ambient);
        checks.push(check(
            g == b,
            format!("{process} ambient: green found={g}, blue found={b}"),
        ));
    }
    Outcome {
        n: 1,
        title: "filters alone cannot separate green from blue",
        note: format!("dG-B={gb:.4} red margin={red_margin:.4}"),
        checks,
    }
}

fn criterion2() -> Outcome {
    let p = CellParams::default();
    let o = &p.optics;
    let mut checks = Vec::new();
    let mut worst = f64::INFINITY;
    for ch in Channel::ALL {
        let light = o.led_for(ch);
        let f = o.filter_for(ch);
        let target = pixel_intensity(o.block(ColorClass::from(ch)).unwrap(), &f, &light);
        for other in Channel::ALL.into_iter().filter(|c| *c != ch) {
            let v = pixel_intensity(o.block(ColorClass::from(other)).unwrap(), &f, &light);
            let ratio = target / v;
            worst = worst.min(ratio);
            checks.push(check(
                ratio >= 3.0,
                format!("{ch:?} scan: {target:.4}/{v:.4} = {ratio:.2} >= 3"),
            ));
        }
    }
    let mut errors = 0;
    for class in CLASSES {
        for (process, ch) in SCANS {
            let found = centered_find(&p, class, process, ch, &o.led_for(ch));
            if found != (class.channel() == Some(ch)) {
                errors += 1;
            }
        }
    }
    checks.push(check(
        errors == 0,
        format!("{errors} errors over 3 parts x 3 scans"),
    ));
    Outcome {
        n: 2,
        title: "matched filter and LED separate all three colors",
        note: format!("worst ratio {worst:.2}, {errors} classification errors"),
        checks,
    }
}

fn criterion3() -> Outcome {
    let cases = [
        (Level::High, Level::High, 90.0, [255, 0, 0]),
        (Level::Low, Level::High, 180.0, [0, 255, 0]),
        (Level::High, Level::Low, 0.0, [0, 0, 255]),
        (Level::Low, Level::Low, 180.0, [0, 255, 0]),
    ];
    let checks = cases
        .iter()
        .map(|&(a, b, angle, rgb)| {
            let got = evaluate(a, b);
            check(got == (angle, rgb), format!("({a:?},{b:?}) -> {got:?}"))
        })
        .collect();
    Outcome {
        n: 3,
        title: "filter-wheel truth table",
        note: "4 cases".into(),
        checks,
    }
}

// ---- robot program corpus ----

fn do_changes(events: &[SimEvent]) -> Vec<(u64, u16, bool)> {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::TagChange {
                tag,
                value: TagValue::Bool(v),
                ..
            } if e.source == Node::Robot && tag.starts_with("DO[") => {
                let n = tag
                    .trim_start_matches("DO[")
                    .trim_end_matches(']')
                    .parse()
                    .ok()?;
                Some((e.t_us, n, *v))
            }
            _ => None,
        })
        .collect()
}

/// Durations of every WAIT, measured from the WAIT statement to the next
/// statement.
fn waits(events: &[SimEvent]) -> Vec<u64> {
    let stmts: Vec<(u64, &str)> = events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::Statement { text, .. } => Some((e.t_us, text.as_str())),
            EventKind::ProgramEnd { .. } => Some((e.t_us, "")),
            _ => None,
        })
        .collect();
    stmts
        .windows(2)
        .filter(|w| w[0].1.starts_with("WAIT"))
        .map(|w| w[1].0 - w[0].0)
        .collect()
}

fn motion_targets(events: &[SimEvent]) -> Vec<[f64; 4]> {
    events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::MotionStart { target, .. } => {
                Some([target.x, target.y, target.z, target.rz])
            }
            _ => None,
        })
        .collect()
}

fn golden(name: &str, events: &[SimEvent]) -> Check {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    let text: String = events
        .iter()
        .map(|e| serde_json::to_string(e).unwrap() + "\n")
        .collect();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &text).unwrap();
        return check(true, format!("golden {name} rewritten"));
    }
    match std::fs::read_to_string(&path) {
        Ok(want) if want == text => check(true, format!("golden {name} matches")),
        Ok(want) => {
            let line = want
                .lines()
                .zip(text.lines())
                .position(|(a, b)| a != b)
                .unwrap_or(want.lines().count().min(text.lines().count()));
            check(false, format!("golden {name} differs at line {}", line + 1))
        }
        Err(e) => check(false, format!("golden {name}: {e}")),
    }
}

fn ends_with_outputs_off(dos: &[(u64, u16, bool)]) -> bool {
    let tail: Vec<(u16, bool)> = dos.iter().rev().take(4).rev().map(|d| (d.1, d.2)).collect();
    tail == [(123, false), (124, false), (125, false), (130, false)]
}

fn criterion4() -> Outcome {
    let started = Instant::now();
    let mut checks = Vec::new();
    let scan = tp::parse(tp::SCANPART_SOURCE);
    let sort = tp::parse(tp::SORTPART_SOURCE);
    checks.push(check(
        scan.is_ok() && sort.is_ok(),
        "both listings parse verbatim",
    ));
    let p = CellParams::default();
    let cam_x = p.conveyor.camera_x_mm;

    // SCANPART on a red part: the expected outputs follow the listing line
    // by line with 50 ms per RUN_FIND.
    let mut e = Engine::bench(p.clone()).unwrap();
    e.place_part(ColorClass::Red, cam_x, 0.0, 0.0);
    e.run_program(&tp::scanpart()).unwrap();
    let scan_sim = e.now_us();
    let ev = e.events().to_vec();
    let want = vec![
        (0, 123, false),
        (0, 124, false),
        (0, 125, false),
        (0, 110, false),
        (0, 112, false),
        (550_000, 123, true),
        (550_000, 110, true),
        (1_100_000, 110, false),
        (1_100_000, 112, true),
        (1_950_000, 112, false),
        (1_950_000, 130, true),
    ];
    let got = do_changes(&ev);
    checks.push(check(got == want, format!("SCANPART DO sequence {got:?}")));
    let w = waits(&ev);
    checks.push(check(
        w == [500_000, 500_000, 800_000],
        format!("SCANPART waits {w:?} us"),
    ));
    checks.push(golden("scanpart_red.jsonl", &ev));

    // SORTPART keep branch.
    let mut e = Engine::bench(p.clone()).unwrap();
    e.set_di(121, true);
    e.run_program(&tp::sortpart()).unwrap();
    let ev = e.events().to_vec();
    let dos = do_changes(&ev);
    let on = dos.iter().find(|d| d.1 == 126 && d.2).map(|d| d.0);
    let off = dos.iter().find(|d| d.1 == 126 && !d.2).map(|d| d.0);
    let pulse = on.zip(off).map(|(a, b)| b - a);
    checks.push(check(
        pulse == Some(750_000),
        format!("CONVEYOR FWD pulse {pulse:?} us"),
    ));
    checks.push(check(
        ends_with_outputs_off(&dos),
        "keep branch ends with DO[123..125,130] OFF",
    ));
    checks.push(golden("sortpart_keep.jsonl", &ev));

    // SORTPART remove branch with VR[1] = (12, -8, 15): targets are the
    // listing's offsets composed by hand.
    let mut e = Engine::bench(p.clone()).unwrap();
    let part = e.place_part(ColorClass::Green, cam_x + 12.0, -8.0, 15.0);
    e.set_vision_register(1, VisionRegister::offset(12.0, -8.0, 15.0));
    e.set_di(121, false);
    e.run_program(&tp::sortpart()).unwrap();
    let ev = e.events().to_vec();
    let want = vec![
        [580.0, 300.0, 150.0, 0.0],
        [592.0, -8.0, 140.0, 15.0],
        [592.0, -8.0, 40.0, 15.0],
        [592.0, -8.0, 140.0, 15.0],
        [580.0, 300.0, 250.0, 0.0],
        [580.0, 300.0, 150.0, 0.0],
    ];
    let got = motion_targets(&ev);
    checks.push(check(got == want, format!("remove branch targets {got:?}")));
    let final_state = e.parts().iter().find(|q| q.id == part).map(|q| q.state);
    checks.push(check(
        final_state == Some(PartState::InRejectBin),
        format!("picked part ends {final_state:?}"),
    ));
    checks.push(check(
        ends_with_outputs_off(&do_changes(&ev)),
        "remove branch ends with DO[123..125,130] OFF",
    ));
    checks.push(golden("sortpart_remove.jsonl", &ev));

    let remove_sim = e.now_us();
    let wall = started.elapsed();
    checks.push(check(
        wall < Duration::from_secs(1),
        format!("wall time {wall:?} < 1 s"),
    ));
    // Pinned budget. SCANPART's own waits add up to 1.80 s, so this cannot
    // hold for any faithful run; it is reported rather than waived.
    let longest = scan_sim.max(remove_sim);
    checks.push(check(
        longest < 1_000_000,
        format!(
            "simulated {:.2} s per program run < 1 s budget",
            longest as f64 / 1e6
        ),
    ));
    Outcome {
        n: 4,
        title: "robot program corpus",
        note: format!(
            "SCANPART {:.2} s simulated (waits alone are 1.80 s), all three runs {wall:.0?} wall",
            scan_sim as f64 / 1e6
        ),
        checks,
    }
}

fn criterion5() -> Outcome {
    let disabled = pack(Direction::RobotToPlc, &["Prg paused", "Motion held"]).unwrap();
    let idle = pack(Direction::PlcToRobot, &["IMSTP", "SFSPD", "Stop", "Enable"]).unwrap();
    let mut checks = vec![
        check(
            disabled[0] == 48,
            format!("robot status word {}", disabled[0]),
        ),
        check(idle[0] == 141, format!("PLC command word {}", idle[0])),
    ];
    // Every subset of the aliases in each word-0 assembly round-trips.
    let mut cases = 0;
    for d in Direction::BOTH {
        let names: Vec<&str> = d.aliases().iter().map(|a| a.name).collect();
        assert!(names.len() <= 16);
        for mask in 0u32..(1 << names.len()) {
            let set: Vec<&str> = names
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, n)| *n)
                .collect();
            let words = pack(d, &set).unwrap();
            let mut back = colorsort_core::iobus::unpack(d, &words);
            let mut want = set.clone();
            back.sort_unstable();
            want.sort_unstable();
            if back != want {
                checks.push(check(
                    false,
                    format!("{d}: {set:?} -> {words:?} -> {back:?}"),
                ));
            }
            cases += 1;
        }
    }
    checks.push(check(true, format!("{cases} subsets round-trip")));
    Outcome {
        n: 5,
        title: "assembly word encoding",
        note: format!("48, 141, {cases} round-trips"),
        checks,
    }
}

fn brute_verdict(d: u8, s: u8, ov: bool) -> Verdict {
    let (dr, dg, db) = (d & 1 != 0, d & 2 != 0, d & 4 != 0);
    let (sr, sg, sb) = (s & 1 != 0, s & 2 != 0, s & 4 != 0);
    let eff_g = dg && !(ov && dg && db);
    if (dr && sr) || (eff_g && sg) || (db && sb) {
        Verdict::PartMatch
    } else {
        Verdict::Remove
    }
}

/// Drives the shipped ladder through one part and reads its verdict bits.
fn ladder_verdict(d: ColorFlags, s: ColorFlags, ov: bool) -> Option<Verdict> {
    let period = 10_000;
    let mut plc = Plc::new(Arc::new(default_program())).unwrap();
    plc.set_input("HMI_Start", true);
    plc.scan(period);
    plc.set_input("HMI_Start", false);
    plc.set_input("HMI_Red_Sel", s.red);
    plc.set_input("HMI_Green_Sel", s.green);
    plc.set_input("HMI_Blue_Sel", s.blue);
    plc.set_input("HMI_Override", ov);
    plc.set_input("Beam", true);
    plc.scan(period);
    let mut bits = vec!["Scan Done"];
    for (on, name) in [(d.red, "Red"), (d.green, "Green"), (d.blue, "Blue")] {
        if on {
            bits.push(name);
        }
    }
    plc.apply_robot_words(&pack(Direction::RobotToPlc, &bits).unwrap());
    for _ in 0..19 {
        plc.scan(period);
        if plc.tag("Robot_Part_Match") || plc.tag("Robot_Remove_Program") {
            return None; // asserted before the verdict timer ran out
        }
    }
    for _ in 0..5 {
        plc.scan(period);
    }
    match (plc.tag("Robot_Part_Match"), plc.tag("Robot_Remove_Program")) {
        (true, false) => Some(Verdict::PartMatch),
        (false, true) => Some(Verdict::Remove),
        _ => None,
    }
}

fn criterion6() -> Outcome {
    let mut checks = Vec::new();
    let mut mismatches = 0;
    for d in 0u8..8 {
        for s in 0u8..8 {
            for ov in [false, true] {
                let want = brute_verdict(d, s, ov);
                let (df, sf) = (ColorFlags::from_mask(d), ColorFlags::from_mask(s));
                let f = verdict(df, sf, ov);
                let l = ladder_verdict(df, sf, ov);
                if f != want || l != Some(want) {
                    mismatches += 1;
                    checks.push(check(
                        false,
                        format!("d={df} s={sf} ov={ov}: want {want:?} fn {f:?} ladder {l:?}"),
                    ));
                }
            }
        }
    }
    checks.push(check(
        mismatches == 0,
        "128 cases, function and ladder agree with brute force",
    ));
    let off = run(&scenario("edge_blue.toml")).unwrap().metrics;
    let on = run(&scenario("edge_blue_override.toml")).unwrap().metrics;
    checks.push(check(
        off.kept.blue == 1 && off.removed.blue == 0,
        format!(
            "edge blue, override off: kept {} removed {}",
            off.kept.blue, off.removed.blue
        ),
    ));
    checks.push(check(
        on.removed.blue == 1 && on.kept.blue == 0,
        format!(
            "edge blue, override on: kept {} removed {}",
            on.kept.blue, on.removed.blue
        ),
    ));
    Outcome {
        n: 6,
        title: "verdict truth table and edge blue part",
        note: format!("{mismatches} mismatches of 128"),
        checks,
    }
}

fn verdict_latencies(events: &[SimEvent]) -> Vec<(u32, u64)> {
    let mut rise = std::collections::BTreeMap::new();
    let mut out = Vec::new();
    for e in events {
        match &e.kind {
            EventKind::BeamEdge {
                blocked: true,
                part: Some(id),
            } => {
                rise.insert(*id, e.t_us);
            }
            EventKind::VerdictIssued { part: Some(id), .. } => {
                if let Some(t0) = rise.get(id) {
                    out.push((*id, e.t_us - t0));
                }
            }
            _ => {}
        }
    }
    out
}

fn criterion7() -> Outcome {
    let s = scenario("criterion7.toml");
    let started = Instant::now();
    let a = run(&s).unwrap();
    let wall = started.elapsed();
    let b = run(&s).unwrap();
    let mut checks = Vec::new();
    let color_of = |id: u32| {
        a.events.iter().find_map(|e| match &e.kind {
            EventKind::PartSpawn { part, color, .. } if *part == id => Some(*color),
            _ => None,
        })
    };
    let bin: Vec<Option<ColorClass>> = a
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::PartState {
                part,
                state: PartState::InRejectBin,
                ..
            } => Some(color_of(*part)),
            _ => None,
        })
        .collect();
    let want_bin = [ColorClass::Green, ColorClass::Blue, ColorClass::Green].map(Some);
    checks.push(check(bin == want_bin, format!("reject bin order {bin:?}")));
    let passed: Vec<Option<ColorClass>> = a
        .events
        .iter()
        .filter_map(|e| match &e.kind {
            EventKind::PartState {
                part,
                state: PartState::PassedThrough,
                ..
            } => Some(color_of(*part)),
            _ => None,
        })
        .collect();
    checks.push(check(
        passed == [Some(ColorClass::Red); 2],
        format!("passed through {passed:?}"),
    ));
    let (ha, hb) = (trace_hash(&a.events), trace_hash(&b.events));
    checks.push(check(ha == hb, format!("re-run trace hash {}", &ha[..12])));
    let lat = verdict_latencies(&a.events);
    let min = lat.iter().map(|l| l.1).min();
    checks.push(check(lat.len() == 5, format!("{} verdicts", lat.len())));
    checks.push(check(
        lat.iter().all(|l| l.1 >= 2_000_000),
        format!("min verdict latency {:?} us >= 2000000", min),
    ));
    checks.push(check(
        wall < Duration::from_secs(1),
        format!("wall time {wall:?} < 1 s"),
    ));
    // Pinned budget. Five sequential verdicts at >= 2 s each already exceed
    // it; reported rather than waived.
    let done = a
        .events
        .iter()
        .rev()
        .find(|e| matches!(e.kind, EventKind::PartState { .. }))
        .map_or(0, |e| e.t_us);
    checks.push(check(
        done < 5_000_000,
        format!(
            "all parts terminal at {:.2} s simulated < 5 s budget",
            done as f64 / 1e6
        ),
    ));
    Outcome {
        n: 7,
        title: "end-to-end sorting and determinism",
        note: format!(
            "{} events, last part terminal at {:.2} s simulated, {wall:.0?} wall",
            a.events.len(),
            a.events
                .iter()
                .rev()
                .find(|e| matches!(e.kind, EventKind::PartState { .. }))
                .map_or(0.0, |e| e.time_s())
        ),
        checks,
    }
}

/// Every change of a robot output wired into the robot-to-PLC assembly must
/// show up in a delivered assembly no later than one RPI after the change.
fn bus_bound_violations(events: &[SimEvent], rpi_us: u64) -> (usize, Vec<String>) {
    let mut checked = 0;
    let mut bad = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let EventKind::TagChange {
            tag,
            prev: Some(TagValue::Bool(prev)),
            value: TagValue::Bool(value),
        } = &e.kind
        else {
            continue;
        };
        if e.source != Node::Robot || prev == value {
            continue;
        }
        let Some(idx) = tag
            .strip_prefix("DO[")
            .and_then(|t| t.strip_suffix(']'))
            .and_then(|t| t.parse::<u16>().ok())
        else {
            continue;
        };
        let Some(alias) = ROBOT_DO_WIRING.iter().find_map(|(n, sink)| match sink {
            DoSink::Assembly(a) if *n == idx => Some(*a),
            _ => None,
        }) else {
            continue;
        };
        checked += 1;
        let seen = events[i + 1..]
            .iter()
            .take_while(|d| d.t_us <= e.t_us + rpi_us)
            .any(|d| match &d.kind {
                EventKind::TagChange {
                    tag,
                    value: TagValue::Assembly { bits, .. },
                    ..
                } => {
                    tag == Direction::RobotToPlc.plc_prefix()
                        && bits.iter().any(|b| b == alias) == *value
                }
                _ => false,
            });
        if !seen {
            bad.push(format!(
                "DO[{idx}]={value} at {} us not delivered within {rpi_us} us",
                e.t_us
            ));
        }
    }
    (checked, bad)
}

fn criterion8() -> Outcome {
    let mut checks = Vec::new();
    let mut total = 0;
    for name in [
        "criterion7.toml",
        "edge_blue.toml",
        "edge_blue_override.toml",
        "stochastic.toml",
        "pause_resume.toml",
    ] {
        let s = scenario(name);
        let rpi = u64::from(s.params.bus.rpi_ms) * 1000;
        let out = run(&s).unwrap();
        let (n, bad) = bus_bound_violations(&out.events, rpi);
        total += n;
        checks.push(check(
            n > 0 && bad.is_empty(),
            format!("{name}: {n} changes, {} late {:?}", bad.len(), bad.first()),
        ));
    }
    Outcome {
        n: 8,
        title: "robot outputs reach the PLC within one RPI",
        note: format!("{total} output changes checked"),
        checks,
    }
}

fn main() {
    let criteria: [fn() -> Outcome; 8] = [
        criterion1, criterion2, criterion3, criterion4, criterion5, criterion6, criterion7,
        criterion8,
    ];
    let mut failed = 0;
    for c in criteria {
        let o = c();
        let ok = o.checks.iter().all(|c| c.0);
        println!(
            "criterion {} {}: {} ({})",
            o.n,
            if ok { "PASS" } else { "FAIL" },
            o.title,
            o.note
        );
        for (_, msg) in o.checks.iter().filter(|c| !c.0) {
            println!("    failed: {msg}");
        }
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
