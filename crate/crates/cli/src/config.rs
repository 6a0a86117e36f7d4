//! Line-oriented `key = value` configuration with `[grid]` / `[channel]` /
//! `[sim]` sections, plus the echo block embedded in every result CSV.
//!
//! A file whose first non-empty line is `# config:` is read as an echo
//! block: the `# `-prefixed lines up to `# end config` are parsed as the
//! config, so a result file can be fed straight back to `--config` and
//! reproduces the run that wrote it.

use anyhow::{anyhow, bail, Result};
use otfs_core::sim::{EqualizerKind, ProfileSpec, SimConfig};

const KEY_SECTIONS: &[(&str, &str)] = &[
    ("m", "grid"),
    ("n", "grid"),
    ("delta_f", "grid"),
    ("profile", "channel"),
    ("positions", "channel"),
    ("powers_db", "channel"),
    ("f_max_hz", "channel"),
    ("cp_len", "channel"),
    ("snr_db", "sim"),
    ("frames", "sim"),
    ("seed", "sim"),
    ("equalizers", "sim"),
    ("qam_order", "sim"),
];

#[derive(Debug, Default)]
struct ProfileDraft {
    kind: Option<String>,
    positions: Option<Vec<usize>>,
    powers_db: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct ConfigDraft {
    cfg: SimConfig,
    profile: ProfileDraft,
}

impl ConfigDraft {
    fn apply(&mut self, key: &str, value: &str, section: Option<&str>, at: &str) -> Result<()> {
        let Some((_, wanted)) = KEY_SECTIONS.iter().find(|(k, _)| *k == key) else {
            bail!("{at}: unknown key '{key}'");
        };
        if let Some(sec) = section {
            if sec != *wanted {
                bail!("{at}: key '{key}' belongs to section [{wanted}], found under [{sec}]");
            }
        }
        let parse_err = |what: &str| anyhow!("{at}: cannot parse '{value}' as {what} for '{key}'");
        match key {
            "m" => self.cfg.m = value.parse().map_err(|_| parse_err("a positive integer"))?,
            "n" => self.cfg.n = value.parse().map_err(|_| parse_err("a positive integer"))?,
            "delta_f" => self.cfg.delta_f = value.parse().map_err(|_| parse_err("a number"))?,
            "profile" => self.profile.kind = Some(value.to_string()),
            "positions" => {
                self.profile.positions = Some(parse_list(value).map_err(|_| parse_err("a comma list of integers"))?)
            }
            "powers_db" => {
                self.profile.powers_db = Some(parse_list(value).map_err(|_| parse_err("a comma list of numbers"))?)
            }
            "f_max_hz" => self.cfg.f_max_hz = value.parse().map_err(|_| parse_err("a number"))?,
            "cp_len" => self.cfg.cp_len = Some(value.parse().map_err(|_| parse_err("a positive integer"))?),
            "snr_db" => self.cfg.snr_db = parse_list(value).map_err(|_| parse_err("a comma list of numbers"))?,
            "frames" => self.cfg.frames = value.parse().map_err(|_| parse_err("a positive integer"))?,
            "seed" => self.cfg.seed = value.parse().map_err(|_| parse_err("an unsigned integer"))?,
            "equalizers" => {
                let mut kinds = Vec::new();
                for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    kinds.push(name.parse::<EqualizerKind>().map_err(|e| anyhow!("{at}: {e}"))?);
                }
                self.cfg.equalizers = kinds;
            }
            "qam_order" => self.cfg.qam_order = value.parse().map_err(|_| parse_err("4, 16 or 64"))?,
            _ => unreachable!(),
        }
        Ok(())
    }

    /// Apply one `KEY=VALUE` override (no section context).
    pub fn apply_override(&mut self, pair: &str) -> Result<()> {
        let Some((key, value)) = pair.split_once('=') else {
            bail!("override '{pair}' is not KEY=VALUE");
        };
        self.apply(key.trim(), value.trim(), None, "override")
    }

    pub fn finish(self) -> Result<SimConfig> {
        let mut cfg = self.cfg;
        let kind = self.profile.kind.as_deref().unwrap_or("vehicular-b");
        cfg.profile = match kind {
            "vehicular-b" => {
                if self.profile.positions.is_some() || self.profile.powers_db.is_some() {
                    bail!("positions/powers_db are only valid with profile = custom");
                }
                ProfileSpec::VehicularB
            }
            "custom" => {
                let positions = self
                    .profile
                    .positions
                    .ok_or_else(|| anyhow!("profile = custom requires 'positions'"))?;
                let powers_db = self
                    .profile
                    .powers_db
                    .ok_or_else(|| anyhow!("profile = custom requires 'powers_db'"))?;
                ProfileSpec::Custom { positions, powers_db }
            }
            other => match other.strip_prefix("vehicular-b-scaled:") {
                Some(pos) => {
                    if self.profile.positions.is_some() || self.profile.powers_db.is_some() {
                        bail!("positions/powers_db are only valid with profile = custom");
                    }
                    ProfileSpec::VehicularBScaled {
                        max_pos: pos
                            .parse()
                            .map_err(|_| anyhow!("bad position in 'vehicular-b-scaled:{pos}'"))?,
                    }
                }
                None => bail!(
                    "unknown profile '{other}' (use vehicular-b, vehicular-b-scaled:<pos> or custom)"
                ),
            },
        };
        Ok(cfg)
    }
}

fn parse_list<T: std::str::FromStr>(value: &str) -> std::result::Result<Vec<T>, T::Err> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Parse config text (plain or echo-block form) into a draft that overrides
/// can still be applied to.
pub fn parse_config_text(text: &str) -> Result<ConfigDraft> {
    let mut draft = ConfigDraft::default();
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    let echo_mode = first == Some("# config:");

    let mut section: Option<String> = None;
    let mut inside_echo = false;
    for (idx, raw) in text.lines().enumerate() {
        let at = format!("line {}", idx + 1);
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line = if echo_mode {
            if line == "# config:" {
                inside_echo = true;
                continue;
            }
            if line == "# end config" {
                inside_echo = false;
                continue;
            }
            if !inside_echo {
                continue;
            }
            match line.strip_prefix("# ") {
                Some(rest) => rest.trim(),
                None => continue,
            }
        } else {
            if line.starts_with('#') {
                continue;
            }
            line
        };
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !matches!(name, "grid" | "channel" | "sim") {
                bail!("{at}: unknown section [{name}]");
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{at}: expected 'key = value', got '{line}'");
        };
        draft.apply(key.trim(), value.trim(), section.as_deref(), &at)?;
    }
    Ok(draft)
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// The `# `-prefixed echo block a result file embeds. Re-parsing it yields
/// the same resolved configuration.
pub fn echo_lines(cfg: &SimConfig) -> Vec<String> {
    let mut out = vec!["# config:".to_string()];
    let mut push = |s: String| out.push(format!("# {s}"));
    push("[grid]".into());
    push(format!("m = {}", cfg.m));
    push(format!("n = {}", cfg.n));
    push(format!("delta_f = {}", cfg.delta_f));
    push("[channel]".into());
    match &cfg.profile {
        ProfileSpec::VehicularB => push("profile = vehicular-b".into()),
        ProfileSpec::VehicularBScaled { max_pos } => {
            push(format!("profile = vehicular-b-scaled:{max_pos}"))
        }
        ProfileSpec::Custom { positions, powers_db } => {
            push("profile = custom".into());
            push(format!("positions = {}", join(positions)));
            push(format!("powers_db = {}", join(powers_db)));
        }
    }
    push(format!("f_max_hz = {}", cfg.f_max_hz));
    if let Some(cp) = cfg.cp_len {
        push(format!("cp_len = {cp}"));
    }
    push("[sim]".into());
    push(format!("snr_db = {}", join(&cfg.snr_db)));
    push(format!("frames = {}", cfg.frames));
    push(format!("seed = {}", cfg.seed));
    push(format!(
        "equalizers = {}",
        cfg.equalizers.iter().map(|e| e.name()).collect::<Vec<_>>().join(",")
    ));
    push(format!("qam_order = {}", cfg.qam_order));
    out.push("# end config".to_string());
    out
}
