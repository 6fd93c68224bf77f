//! Built-in protocols, bundled spec files and `gen-data`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use otlab_core::model::{compile_with_deferred_measurement, validate, ProtocolSpec};
use otlab_core::otcore::{
    announce_coin, cf_from_ot_protocol, qutrit_commitment_cf, qutrit_ot_with_inputs,
    qutrit_random_ot, InteractiveProtocol,
};
use serde_json::{json, Value};

use crate::{CliError, CliResult};

/// Protocols built into the binary; `fot` is handled separately.
pub const BUILTIN: [&str; 5] = [
    "qutrit-ot",
    "qutrit-ot-inputs",
    "cf-from-ot",
    "qutrit-commitment-cf",
    "announce-coin",
];

/// Specs written by `gen-data`: file stem and source protocol. The
/// CF-from-OT composition (total dimension 13824) is left out.
pub const BUNDLED: [&str; 3] = ["qutrit-ot", "qutrit-commitment-cf", "announce-coin"];

pub fn builtin(name: &str) -> CliResult<Option<InteractiveProtocol>> {
    Ok(Some(match name {
        "qutrit-ot" => qutrit_random_ot()?.protocol,
        "qutrit-ot-inputs" => qutrit_ot_with_inputs()?.protocol,
        "cf-from-ot" => cf_from_ot_protocol(&qutrit_random_ot()?)?,
        "qutrit-commitment-cf" => qutrit_commitment_cf()?,
        "announce-coin" => announce_coin()?,
        _ => return Ok(None),
    }))
}

/// `OTLAB_DATA_DIR`, or the `data` directory next to this crate's manifest.
pub fn data_dir() -> PathBuf {
    std::env::var_os("OTLAB_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("data"))
}

/// Resolves a path, or the name of a bundled spec (with or without `.json`).
pub fn spec_path(arg: &str) -> CliResult<PathBuf> {
    let direct = PathBuf::from(arg);
    if direct.is_file() {
        return Ok(direct);
    }
    let stem = arg.strip_suffix(".json").unwrap_or(arg);
    let bundled = data_dir().join(format!("{stem}.json"));
    if bundled.is_file() {
        return Ok(bundled);
    }
    Err(CliError::usage(format!(
        "`{arg}` is neither a file nor a bundled spec in {} (bundled: {})",
        data_dir().display(),
        BUNDLED.join(", ")
    )))
}

/// Reads and validates a spec file.
pub fn load_spec(arg: &str) -> CliResult<(PathBuf, ProtocolSpec)> {
    let path = spec_path(arg)?;
    let text = fs::read_to_string(&path)?;
    let spec: ProtocolSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: not a protocol spec: {e}", path.display())))?;
    let violations = validate(&spec);
    if !violations.is_empty() {
        return Err(CliError {
            code: 2,
            message: format!("{}: invalid spec: {}", path.display(), violations[0]),
            detail: Some(serde_json::to_value(&violations)?),
        });
    }
    Ok((path, spec))
}

pub fn spec_summary(spec: &ProtocolSpec) -> Value {
    json!({
        "dims": { "a": spec.dim_a, "m": spec.dim_m, "b": spec.dim_b, "total": spec.total_dim() },
        "rounds": spec.rounds.len(),
        "n": spec.n,
        "k": spec.k,
    })
}

/// Compiled round form of a bundled protocol.
pub fn compile_bundled(name: &str) -> CliResult<ProtocolSpec> {
    let ip =
        builtin(name)?.ok_or_else(|| CliError::usage(format!("no built-in protocol `{name}`")))?;
    Ok(compile_with_deferred_measurement(&ip)?)
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output directory (default: the bundled data directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &GenDataArgs) -> CliResult<Value> {
    let dir = args.out.clone().unwrap_or_else(data_dir);
    fs::create_dir_all(&dir)?;
    let mut files = Vec::new();
    for name in BUNDLED {
        let spec = compile_bundled(name)?;
        let text = serde_json::to_string(&spec)?;
        let path = dir.join(format!("{name}.json"));
        fs::write(&path, &text)?;
        files.push(json!({
            "name": name,
            "path": path.display().to_string(),
            "bytes": text.len(),
            "spec": spec_summary(&spec),
        }));
    }
    Ok(json!({ "directory": dir.display().to_string(), "files": files }))
}
