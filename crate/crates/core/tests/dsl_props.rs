use std::collections::HashMap;
use std::f64::consts::PI;

use donorsim::dsl::{
    self, BindingMode, DelaySpec, SequenceAst, Span, Stmt, StmtKind, TimeLit, TimeUnit,
};
use donorsim::program::{DelayTime, Event, PulseProgram};
use proptest::prelude::*;

const RESERVED: [&str; 11] = [
    "seq", "cycle", "pulse", "delay", "angle", "phase", "dur", "ns", "us", "ms", "s",
];

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,7}".prop_filter("reserved word", |s| !RESERVED.contains(&s.as_str()))
}

fn number() -> impl Strategy<Value = f64> {
    prop_oneof![
        (-720i32..720).prop_map(f64::from),
        -1e4..1e4f64,
        (0u32..100, 1u32..7).prop_map(|(m, e)| m as f64 / 10f64.powi(e as i32)),
    ]
}

fn time() -> impl Strategy<Value = TimeLit> {
    let unit = prop_oneof![
        Just(TimeUnit::Ns),
        Just(TimeUnit::Us),
        Just(TimeUnit::Ms),
        Just(TimeUnit::S)
    ];
    (0.0..1e3f64, unit).prop_map(|(value, unit)| TimeLit { value, unit })
}

fn stmt() -> impl Strategy<Value = StmtKind> {
    prop_oneof![
        (ident(), prop::collection::vec(number(), 1..5))
            .prop_map(|(label, phases)| StmtKind::Cycle { label, phases }),
        (
            prop::option::of(ident()),
            number(),
            number(),
            prop::option::of(time())
        )
            .prop_map(|(label, angle, phase, dur)| StmtKind::Pulse {
                label,
                angle,
                phase,
                dur
            }),
        time().prop_map(|t| StmtKind::Delay(DelaySpec::Time(t))),
        ident().prop_map(|s| StmtKind::Delay(DelaySpec::Symbol(s))),
    ]
}

fn program() -> impl Strategy<Value = SequenceAst> {
    (ident(), prop::collection::vec(stmt(), 0..10)).prop_map(|(name, kinds)| SequenceAst {
        name,
        statements: kinds
            .into_iter()
            .map(|kind| Stmt {
                kind,
                span: Span::default(),
            })
            .collect(),
        span: Span::default(),
    })
}

/// Byte offset, line and column of every token in `text`.
fn token_positions(text: &str) -> Vec<(usize, usize, usize, usize)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let (mut line, mut col) = (1, 1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        let run = |pred: &dyn Fn(char) -> bool, mut j: usize| {
            while j < chars.len() && pred(chars[j].1) {
                j += 1;
            }
            j
        };
        let end = if c.is_whitespace() {
            if c == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
            continue;
        } else if c.is_ascii_alphabetic() || c == '_' {
            run(&|c| c.is_ascii_alphanumeric() || c == '_', i + 1)
        } else if c.is_ascii_digit() || matches!(c, '.' | '-' | '+') {
            run(&|c| c.is_ascii_digit() || c == '.', i + 1)
        } else {
            i + 1
        };
        let byte_end = chars.get(end).map_or(text.len(), |p| p.0);
        out.push((start, byte_end, line, col));
        col += end - i;
        i = end;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1200))]

    #[test]
    fn print_then_parse_is_identity(ast in program()) {
        let text = dsl::pretty_print(&ast);
        let back = dsl::parse(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &ast);
        prop_assert_eq!(dsl::pretty_print(&back), text);
    }

    #[test]
    fn corrupted_token_is_reported_in_place(ast in program(), pick in any::<prop::sample::Index>(), lexical in any::<bool>()) {
        let text = dsl::pretty_print(&ast);
        let toks = token_positions(&text);
        let k = pick.index(toks.len());
        let (start, end, line, col) = toks[k];
        let original = &text[start..end];
        let bad = if lexical { "@" } else if original == "=" { "{" } else { "=" };
        let corrupted = format!("{}{bad}{}", &text[..start], &text[end..]);
        let err = dsl::parse(&corrupted).expect_err("corruption must not parse");
        // One token of lookahead may attribute the fault to the token just before.
        let at = (err.line, err.column);
        let before = k.checked_sub(1).map(|j| (toks[j].2, toks[j].3));
        prop_assert!(!lexical || at == (line, col), "{} vs {}:{}", err, line, col);
        prop_assert!(at == (line, col) || Some(at) == before, "{} vs {}:{}\n{}", err, line, col, corrupted);
    }
}

#[test]
fn hahn_text_compiles_to_two_shot_cycle() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../sequences/hahn.seq"
    ))
    .unwrap();
    let ast = dsl::parse(&text).unwrap();
    assert!(dsl::validate(&ast).is_empty());
    let prog = dsl::compile(&ast, &HashMap::new(), BindingMode::AllowSymbolic).unwrap();
    assert_eq!(prog.symbols(), vec!["tau".to_string()]);
    assert_eq!(prog.shot_count(), 2);

    let reference = PulseProgram::hahn_echo();
    for k in 0..2 {
        let shot = prog.shot(k);
        let want = reference.shot(k);
        assert_eq!(shot.len(), 5);
        for (a, b) in shot.iter().zip(&want) {
            match (a, b) {
                (Event::Pulse(p), Event::Pulse(q)) => {
                    assert!((p.angle - q.angle).abs() < 1e-15 && (p.phase - q.phase).abs() < 1e-15);
                }
                (Event::Delay(DelayTime::Symbol(s)), Event::Delay(DelayTime::Symbol(r))) => {
                    assert_eq!(s, r)
                }
                other => panic!("shot {k}: {other:?}"),
            }
        }
    }
    let first = |k: usize| match &prog.shot(k)[0] {
        Event::Pulse(p) => (p.angle, p.phase),
        e => panic!("{e:?}"),
    };
    assert_eq!(first(0), (PI / 2.0, 0.0));
    assert!((first(1).0 - PI / 2.0).abs() < 1e-15 && (first(1).1 - PI).abs() < 1e-15);
}
