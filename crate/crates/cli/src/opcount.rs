use std::fmt::Write;

use wban_core::opcount::{iamkeys_scenarios, kemesis_scenarios, ScenarioRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OpcountFormat {
    #[default]
    Text,
    Csv,
}

/// Renders the IAMKeys and KEMESIS scenario tables.
pub fn cmd_opcount(format: OpcountFormat) -> String {
    let iamkeys = iamkeys_scenarios();
    let kemesis = kemesis_scenarios();
    match format {
        OpcountFormat::Csv => {
            let mut out = String::from("scheme,scenario,alpha,beta,gamma,encrypt,decrypt\n");
            for r in iamkeys.iter().chain(&kemesis) {
                let p = r.params;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.scheme, r.scenario, p.alpha, p.beta, p.gamma, r.encrypt, r.decrypt
                );
            }
            out
        }
        OpcountFormat::Text => {
            let mut out = String::new();
            table(&mut out, "IAMKeys, single block, alpha = 3, gamma = 1", &iamkeys, |r| {
                format!("beta={}", r.params.beta)
            });
            out.push('\n');
            table(&mut out, "KEMESIS, beta = 1", &kemesis, |r| {
                format!("gamma={}", r.params.gamma)
            });
            out
        }
    }
}

fn table(out: &mut String, title: &str, rows: &[ScenarioRow], param: impl Fn(&ScenarioRow) -> String) {
    let _ = writeln!(out, "{title}");
    let _ = writeln!(
        out,
        "{:<10} {:<8} {:>8} {:>8}",
        "scenario", "param", "encrypt", "decrypt"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:<8} {:>8} {:>8}",
            r.scenario,
            param(r),
            r.encrypt,
            r.decrypt
        );
    }
}
