//! ISCAS BENCH reader and writer.
//!
//! Grammar, one statement per line, `#` starts a comment:
//!
//! ```text
//! INPUT(a)
//! OUTPUT(z)
//! q = DFF(d)
//! z = NAND(a, q)
//! ```

use std::fmt::Write as _;

use crate::netlist::{GateKind, NetId, Netlist, NetlistBuilder, NetlistError, KEY_INPUT_PREFIX};

/// Parse BENCH text. Flip-flop order follows declaration order.
pub fn parse_bench(text: &str) -> Result<Netlist, NetlistError> {
    let mut b = NetlistBuilder::new();
    let mut outputs: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        let lead = content.len() - content.trim_start().len();
        let stmt = content.trim();
        let err = |col: usize, message: String| NetlistError::Syntax {
            line,
            column: lead + col + 1,
            message,
        };
        if let Some(eq) = stmt.find('=') {
            let lhs = stmt[..eq].trim();
            check_ident(lhs).map_err(|m| err(0, m))?;
            let rhs_off = eq + 1 + (stmt[eq + 1..].len() - stmt[eq + 1..].trim_start().len());
            let (func, args) = split_call(&stmt[rhs_off..]).map_err(|(c, m)| err(rhs_off + c, m))?;
            if func.eq_ignore_ascii_case("DFF") {
                if args.len() != 1 {
                    return Err(err(rhs_off, format!("DFF takes one input, got {}", args.len())));
                }
                let d = b.net(&args[0]);
                b.dff(lhs, d);
                continue;
            }
            let kind = GateKind::from_bench_name(&func)
                .ok_or_else(|| err(rhs_off, format!("unknown gate type `{func}`")))?;
            if !kind.arity_ok(args.len()) {
                return Err(err(
                    rhs_off,
                    format!("{kind} does not accept {} inputs", args.len()),
                ));
            }
            let ins: Vec<NetId> = args.iter().map(|a| b.net(a)).collect();
            b.gate(kind, &ins, lhs);
        } else {
            let (func, args) = split_call(stmt).map_err(|(c, m)| err(c, m))?;
            if args.len() != 1 {
                return Err(err(0, format!("{func} takes one net, got {}", args.len())));
            }
            match func.to_ascii_uppercase().as_str() {
                "INPUT" => {
                    if args[0].starts_with(KEY_INPUT_PREFIX) {
                        b.key_input(&args[0]);
                    } else {
                        b.input(&args[0]);
                    }
                }
                "OUTPUT" => outputs.push(args[0].clone()),
                _ => return Err(err(0, format!("expected INPUT, OUTPUT or assignment, found `{func}`"))),
            }
        }
    }
    for o in outputs {
        let id = b.net(&o);
        b.output(id);
    }
    b.build()
}

fn check_ident(s: &str) -> Result<(), String> {
    if s.is_empty() {
        return Err("missing net name".into());
    }
    if let Some(c) = s.chars().find(|c| c.is_whitespace() || "(),=".contains(*c)) {
        return Err(format!("unexpected `{c}` in net name `{s}`"));
    }
    Ok(())
}

/// `NAME(arg, arg, ...)` -> (NAME, args). Errors carry a column offset.
fn split_call(s: &str) -> Result<(String, Vec<String>), (usize, String)> {
    let open = s.find('(').ok_or((0, format!("expected `(` in `{s}`")))?;
    let close = s.rfind(')').ok_or((s.len(), "missing `)`".to_string()))?;
    if close < open {
        return Err((close, "`)` before `(`".into()));
    }
    if !s[close + 1..].trim().is_empty() {
        return Err((close + 1, "trailing characters after `)`".into()));
    }
    let func = s[..open].trim();
    check_ident(func).map_err(|m| (0, m))?;
    let inner = &s[open + 1..close];
    let mut args = Vec::new();
    if !inner.trim().is_empty() {
        let mut off = open + 1;
        for part in inner.split(',') {
            let arg = part.trim();
            check_ident(arg).map_err(|m| (off, m))?;
            args.push(arg.to_string());
            off += part.len() + 1;
        }
    }
    Ok((func.to_string(), args))
}

/// Pretty-print as BENCH. Gates come out in topological order.
pub fn write_bench(n: &Netlist) -> String {
    let mut out = String::new();
    let name = |id: NetId| n.net_name(id);
    for &i in n.inputs().iter().chain(n.keys()) {
        let _ = writeln!(out, "INPUT({})", name(i));
    }
    for &o in n.outputs() {
        let _ = writeln!(out, "OUTPUT({})", name(o));
    }
    if !n.flip_flops().is_empty() {
        out.push('\n');
    }
    for ff in n.flip_flops() {
        let _ = writeln!(out, "{} = DFF({})", name(ff.q), name(ff.d));
    }
    out.push('\n');
    for &g in n.topo_order() {
        let gate = &n.gates()[g];
        let args: Vec<&str> = gate.inputs.iter().map(|&i| name(i)).collect();
        let _ = writeln!(out, "{} = {}({})", name(gate.output), gate.kind, args.join(", "));
    }
    out
}
