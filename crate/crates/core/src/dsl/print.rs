use std::fmt::Write;

use super::{DelaySpec, SequenceAst, StmtKind, TimeLit};

fn time(t: &TimeLit) -> String {
    format!("{}{}", t.value, t.unit.suffix())
}

/// Canonical text: one statement per line, two-space indent, numbers in shortest form.
pub fn pretty_print(ast: &SequenceAst) -> String {
    if ast.statements.is_empty() {
        return format!("seq {} {{ }}\n", ast.name);
    }
    let mut out = format!("seq {} {{\n", ast.name);
    for st in &ast.statements {
        out.push_str("  ");
        match &st.kind {
            StmtKind::Cycle { label, phases } => {
                let list: Vec<String> = phases.iter().map(|p| format!("{p}")).collect();
                let _ = write!(out, "cycle {label} [{}];", list.join(", "));
            }
            StmtKind::Pulse {
                label,
                angle,
                phase,
                dur,
            } => {
                out.push_str("pulse ");
                if let Some(l) = label {
                    let _ = write!(out, "{l} ");
                }
                let _ = write!(out, "angle={angle} phase={phase}");
                if let Some(d) = dur {
                    let _ = write!(out, " dur={}", time(d));
                }
                out.push(';');
            }
            StmtKind::Delay(DelaySpec::Time(t)) => {
                let _ = write!(out, "delay {};", time(t));
            }
            StmtKind::Delay(DelaySpec::Symbol(s)) => {
                let _ = write!(out, "delay {s};");
            }
        }
        out.push('\n');
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn canonical_form() {
        let ast =
            parse("seq h{cycle p1[0,180.0];pulse p1 angle=90.0 phase=0;delay 1.50ms;}").unwrap();
        assert_eq!(
            pretty_print(&ast),
            "seq h {\n  cycle p1 [0, 180];\n  pulse p1 angle=90 phase=0;\n  delay 1.5ms;\n}\n"
        );
    }

    #[test]
    fn empty_sequence() {
        let ast = parse("seq name {}").unwrap();
        assert_eq!(pretty_print(&ast), "seq name { }\n");
        assert_eq!(parse(&pretty_print(&ast)).unwrap(), ast);
    }
}
