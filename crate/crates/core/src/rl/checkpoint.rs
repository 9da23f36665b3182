//! Portable text checkpoints of a Q-learning agent.
//!
//! Format (UTF-8, one record per line, values separated by single spaces):
//!
//! ```text
//! nru-coex-checkpoint 1
//! arch mlp <w0> <w1> ...          | arch gru <input> <steps> <hidden> <output>
//! steps <decision steps>
//! rng <64 hex digits of seed> <stream> <word position>
//! theta <n> <v1> ... <vn>
//! target <n> <v1> ... <vn>
//! rmsprop <n> <v1> ... <vn>
//! ```
//!
//! Floats use Rust's shortest round-trip representation, so a save/load
//! cycle is bit exact.

use std::fmt::Write as _;
use std::path::Path;

use super::Arch;
use crate::{Error, Result};

const MAGIC: &str = "nru-coex-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Arch,
    pub theta: Vec<f64>,
    pub target: Vec<f64>,
    pub rms_v: Vec<f64>,
    pub steps: u64,
    pub rng_seed: [u8; 32],
    pub rng_stream: u64,
    pub rng_word_pos: u128,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse<T: std::str::FromStr>(s: Option<&str>, what: &str) -> Result<T> {
    s.ok_or_else(|| bad(format!("missing {what}")))?
        .parse()
        .map_err(|_| bad(format!("malformed {what}")))
}

fn write_vec(out: &mut String, name: &str, v: &[f64]) {
    let _ = write!(out, "{name} {}", v.len());
    for x in v {
        let _ = write!(out, " {x:?}");
    }
    out.push('\n');
}

fn read_vec(line: Option<&str>, name: &str) -> Result<Vec<f64>> {
    let mut it = line.ok_or_else(|| bad(format!("missing {name} record")))?.split(' ');
    if it.next() != Some(name) {
        return Err(bad(format!("expected {name} record")));
    }
    let n: usize = parse(it.next(), &format!("{name} length"))?;
    let v: Vec<f64> = it.map(|s| parse(Some(s), name)).collect::<Result<_>>()?;
    if v.len() != n {
        return Err(bad(format!("{name} declares {n} values but holds {}", v.len())));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite(format!("checkpoint {name}")));
    }
    Ok(v)
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        match &self.arch {
            Arch::Mlp { layers } => {
                out.push_str("arch mlp");
                for w in layers {
                    let _ = write!(out, " {w}");
                }
                out.push('\n');
            }
            Arch::Gru {
                input,
                steps,
                hidden,
                output,
            } => {
                let _ = writeln!(out, "arch gru {input} {steps} {hidden} {output}");
            }
        }
        let _ = writeln!(out, "steps {}", self.steps);
        out.push_str("rng ");
        for b in self.rng_seed {
            let _ = write!(out, "{b:02x}");
        }
        let _ = writeln!(out, " {} {}", self.rng_stream, self.rng_word_pos);
        write_vec(&mut out, "theta", &self.theta);
        write_vec(&mut out, "target", &self.target);
        write_vec(&mut out, "rmsprop", &self.rms_v);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut head = lines.next().ok_or_else(|| bad("empty file"))?.split(' ');
        if head.next() != Some(MAGIC) {
            return Err(bad("not a checkpoint file"));
        }
        let version: u32 = parse(head.next(), "version")?;
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }

        let mut arch_it = lines.next().ok_or_else(|| bad("missing arch record"))?.split(' ');
        if arch_it.next() != Some("arch") {
            return Err(bad("expected arch record"));
        }
        let kind = arch_it.next();
        let dims: Vec<usize> = arch_it.map(|s| parse(Some(s), "arch dimension")).collect::<Result<_>>()?;
        let arch = match (kind, dims.as_slice()) {
            (Some("mlp"), _) => Arch::Mlp { layers: dims },
            (Some("gru"), &[input, steps, hidden, output]) => Arch::Gru {
                input,
                steps,
                hidden,
                output,
            },
            _ => return Err(bad("unknown architecture")),
        };
        arch.validate().map_err(|e| bad(e.to_string()))?;

        let mut steps_it = lines.next().ok_or_else(|| bad("missing steps record"))?.split(' ');
        if steps_it.next() != Some("steps") {
            return Err(bad("expected steps record"));
        }
        let steps: u64 = parse(steps_it.next(), "steps")?;

        let mut rng_it = lines.next().ok_or_else(|| bad("missing rng record"))?.split(' ');
        if rng_it.next() != Some("rng") {
            return Err(bad("expected rng record"));
        }
        let hex = rng_it.next().ok_or_else(|| bad("missing rng seed"))?;
        if hex.len() != 64 {
            return Err(bad("rng seed must be 64 hex digits"));
        }
        let mut rng_seed = [0u8; 32];
        for (i, b) in rng_seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).map_err(|_| bad("malformed rng seed"))?;
        }
        let rng_stream: u64 = parse(rng_it.next(), "rng stream")?;
        let rng_word_pos: u128 = parse(rng_it.next(), "rng word position")?;

        let theta = read_vec(lines.next(), "theta")?;
        let target = read_vec(lines.next(), "target")?;
        let rms_v = read_vec(lines.next(), "rmsprop")?;
        let n = arch.param_len();
        if theta.len() != n || target.len() != n || rms_v.len() != n {
            return Err(bad(format!("parameter vectors must hold {n} values")));
        }
        Ok(Self {
            arch,
            theta,
            target,
            rms_v,
            steps,
            rng_seed,
            rng_stream,
            rng_word_pos,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::Agent;
    use crate::rl::{DdqnAgent, DdqnConfig, Transition};

    fn trained_agent() -> DdqnAgent {
        let mut cfg = DdqnConfig::new(
            Arch::Gru {
                input: 2,
                steps: 2,
                hidden: 3,
                output: 4,
            },
            50,
            4,
        );
        cfg.batch = 2;
        let mut agent = DdqnAgent::new(cfg).unwrap();
        for i in 0..6 {
            agent
                .observe(Transition {
                    state: vec![0.1 * i as f64; 4],
                    action: i % 4,
                    reward: 1.0 / 3.0,
                    next_state: vec![0.7; 4],
                })
                .unwrap();
        }
        agent
    }

    #[test]
    fn text_round_trip_is_exact_and_resumes_identically() {
        let mut a = trained_agent();
        let ck = a.checkpoint();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("agent.ckpt");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, ck);

        let mut b = trained_agent();
        b.online.theta.iter_mut().for_each(|x| *x = 0.0);
        b.restore(&loaded).unwrap();
        let obs = [0.3, 0.2, 0.9, 0.1];
        for _ in 0..20 {
            assert_eq!(a.act(&obs, false).unwrap(), b.act(&obs, false).unwrap());
        }
    }

    #[test]
    fn malformed_files_rejected() {
        let good = trained_agent().checkpoint().to_text();
        assert!(Checkpoint::from_text("").is_err());
        assert!(Checkpoint::from_text("something else 1\n").is_err());
        assert!(Checkpoint::from_text(&good.replace("checkpoint 1", "checkpoint 9")).is_err());
        let truncated: String = good.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(Checkpoint::from_text(&truncated).is_err());
        let mut other = trained_agent();
        let mut ck = other.checkpoint();
        ck.arch = Arch::mlp(vec![4, 4]);
        assert!(other.restore(&ck).is_err());
    }
}
