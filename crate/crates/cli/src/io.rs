//! File formats: loop JSONL (bit-exact round trip), soup files with a
//! key=value header, cluster dumps, chain CSV, run manifests, and the
//! plain-text config format.

use anyhow::{anyhow, bail, Context, Result};
use cle_core::clusters::Cluster;
use cle_core::geom::{pt, Loop, Point};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

/// Metadata carried with each serialized loop.
#[derive(Clone, Debug, Default)]
pub struct LoopMeta {
    pub generation: u32,
    pub parent: Option<u32>,
}

/// One loop as a JSONL line: a two-element array of the vertex list and a
/// metadata object.
pub fn loop_to_line(lp: &Loop, meta: &LoopMeta) -> String {
    let verts: Vec<Value> = lp
        .vertices()
        .iter()
        .map(|p| json!([p.x, p.y]))
        .collect();
    let meta = json!({
        "orientation": if lp.signed_area() >= 0.0 { "ccw" } else { "cw" },
        "tag": if lp.is_simple_tagged() { "simple" } else { "raw" },
        "generation": meta.generation,
        "parent": meta.parent,
    });
    serde_json::to_string(&json!([verts, meta])).expect("loop serializes")
}

pub fn loop_from_line(line: &str) -> Result<(Loop, LoopMeta)> {
    let v: Value = serde_json::from_str(line).context("parse loop line")?;
    let arr = v.as_array().ok_or_else(|| anyhow!("expected array line"))?;
    if arr.len() != 2 {
        bail!("expected [vertices, meta]");
    }
    let verts = arr[0]
        .as_array()
        .ok_or_else(|| anyhow!("expected vertex array"))?;
    let pts: Vec<Point> = verts
        .iter()
        .map(|p| {
            let xy = p.as_array().ok_or_else(|| anyhow!("vertex must be [x, y]"))?;
            Ok(pt(
                xy[0].as_f64().ok_or_else(|| anyhow!("x not a number"))?,
                xy[1].as_f64().ok_or_else(|| anyhow!("y not a number"))?,
            ))
        })
        .collect::<Result<_>>()?;
    let meta = &arr[1];
    let simple = meta["tag"].as_str() == Some("simple");
    let lp = if simple {
        Loop::new_simple(pts)
    } else {
        Loop::new_raw(pts)
    }
    .map_err(|e| anyhow!("invalid loop: {e}"))?;
    Ok((
        lp,
        LoopMeta {
            generation: meta["generation"].as_u64().unwrap_or(0) as u32,
            parent: meta["parent"].as_u64().map(|p| p as u32),
        },
    ))
}

/// Write loops as JSONL with an optional key=value header line.
pub fn write_loops(
    path: &Path,
    header: &[(String, String)],
    loops: impl Iterator<Item = (Loop, LoopMeta)>,
) -> Result<()> {
    let mut out = String::new();
    if !header.is_empty() {
        out.push('#');
        for (k, v) in header {
            out.push_str(&format!(" {k}={v}"));
        }
        out.push('\n');
    }
    for (lp, meta) in loops {
        out.push_str(&loop_to_line(&lp, &meta));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("write {}", path.display()))
}

/// Read a loop JSONL file, skipping `#` header lines. Returns the header
/// pairs and the loops.
pub fn read_loops(path: &Path) -> Result<(BTreeMap<String, String>, Vec<(Loop, LoopMeta)>)> {
    let file = fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    let mut header = BTreeMap::new();
    let mut loops = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for tok in rest.split_whitespace() {
                if let Some((k, v)) = tok.split_once('=') {
                    header.insert(k.to_string(), v.to_string());
                }
            }
            continue;
        }
        let parsed = loop_from_line(&line)
            .map_err(|e| anyhow!("{}:{}: {e}", path.display(), lineno + 1))?;
        loops.push(parsed);
    }
    Ok((header, loops))
}

/// Cluster dump line: ids, member count, boundaries, soup hash reference.
pub fn cluster_to_line(id: usize, cluster: &Cluster, soup_hash: &str) -> String {
    let loop_json = |lp: &Loop| -> Value {
        Value::Array(lp.vertices().iter().map(|p| json!([p.x, p.y])).collect())
    };
    let inner: Vec<Value> = cluster
        .inner_at
        .iter()
        .map(|(z, lp)| json!({"basepoint": [z.x, z.y], "loop": loop_json(lp)}))
        .collect();
    serde_json::to_string(&json!({
        "cluster_id": id,
        "member_count": cluster.member_ids.len(),
        "member_ids": cluster.member_ids,
        "outer": cluster.outer.as_ref().map(loop_json),
        "inner_at": inner,
        "soup": soup_hash,
    }))
    .expect("cluster serializes")
}

/// Plain-text config: `key = value` lines under `[section]` headers.
/// Lookup keys are `section.key` (or bare `key` before any section).
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile> {
        let text = fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
        Ok(ConfigFile::parse(&text))
    }

    pub fn parse(text: &str) -> ConfigFile {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                let key = if section.is_empty() {
                    k.trim().to_string()
                } else {
                    format!("{section}.{}", k.trim())
                };
                values.insert(key, v.trim().to_string());
            }
        }
        ConfigFile { values }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}

/// SHA-256 of a file, hex encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Run manifest: configuration key=value lines plus content hashes of all
/// outputs. Re-running from the same manifest reproduces the outputs.
pub struct Manifest {
    entries: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str) -> Manifest {
        Manifest {
            entries: vec![("command".to_string(), command.to_string())],
            outputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k} = {v}\n"));
        }
        for p in &self.outputs {
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().to_string())
                .unwrap_or_default();
            text.push_str(&format!("sha256 {} = {}\n", name, file_sha256(p)?));
        }
        let path = out_dir.join("manifest.txt");
        let mut f = fs::File::create(&path)?;
        f.write_all(text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cle_core::geom::Point;

    #[test]
    fn loop_line_round_trips_bit_exactly() {
        let lp = Loop::circle(pt(0.123456789123, -7.5e-3), 1.2345678901234567, 37);
        let meta = LoopMeta {
            generation: 3,
            parent: Some(7),
        };
        let line = loop_to_line(&lp, &meta);
        let (back, back_meta) = loop_from_line(&line).unwrap();
        assert_eq!(back.vertices().len(), lp.vertices().len());
        for (a, b) in back.vertices().iter().zip(lp.vertices()) {
            assert!(a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits());
        }
        assert_eq!(back_meta.generation, 3);
        assert_eq!(back_meta.parent, Some(7));
        assert_eq!(loop_to_line(&back, &back_meta), line);
    }

    #[test]
    fn config_sections_and_overrides() {
        let cfg = ConfigFile::parse(
            "# comment\nworkers = 3\n[soup]\nc = 0.9\nseed = 17\n[stats]\nalpha = 0.01\n",
        );
        assert_eq!(cfg.get("workers"), Some("3"));
        assert_eq!(cfg.get("soup.c"), Some("0.9"));
        assert_eq!(cfg.get("stats.alpha"), Some("0.01"));
        assert_eq!(cfg.get("missing"), None);
    }

    #[test]
    fn raw_loops_round_trip_too() {
        let mut rg = cle_core::rng::root(5);
        let lp = cle_core::loopsoup::sample_brownian_loop(0.3, Point::ZERO, 64, &mut rg);
        let line = loop_to_line(&lp, &LoopMeta::default());
        let (back, _) = loop_from_line(&line).unwrap();
        assert_eq!(back, lp);
    }
}
