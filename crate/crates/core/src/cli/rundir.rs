use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::settings::RunConfig;
use crate::error::{Error, Result};

pub const CONFIG_ECHO: &str = "config.txt";
pub const MANIFEST: &str = "MANIFEST.sha256";

pub fn hash_file(path: &Path) -> Result<String> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Every regular file under `root`, as sorted `/`-separated relative paths.
pub fn list_files(root: &Path) -> Result<Vec<String>> {
    fn walk(dir: &Path, prefix: &str, out: &mut Vec<String>) -> Result<()> {
        let mut entries = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map_err(|e| Error::io(dir, e)))
            .collect::<Result<Vec<_>>>()?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let name = e.file_name().to_string_lossy().into_owned();
            let rel = if prefix.is_empty() { name.clone() } else { format!("{prefix}/{name}") };
            let ty = e.file_type().map_err(|err| Error::io(e.path(), err))?;
            if ty.is_dir() {
                walk(&e.path(), &rel, out)?;
            } else if ty.is_file() {
                out.push(rel);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, "", &mut out)?;
    Ok(out)
}

/// `(relative path, sha256)` for every file under `root` except `skip`.
pub fn hash_tree(root: &Path, skip: &[&str]) -> Result<Vec<(String, String)>> {
    list_files(root)?
        .into_iter()
        .filter(|rel| !skip.contains(&rel.as_str()))
        .map(|rel| Ok((hash_file(&root.join(&rel))?, rel)))
        .map(|r: Result<(String, String)>| r.map(|(h, rel)| (rel, h)))
        .collect()
}

/// One digest over a whole tree (paths and contents).
pub fn tree_digest(root: &Path, skip: &[&str]) -> Result<String> {
    let mut h = Sha256::new();
    for (rel, digest) in hash_tree(root, skip)? {
        h.update(rel.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
        h.update(*b"\n");
    }
    Ok(hex::encode(h.finalize()))
}

/// Writes `sha256  path` lines for every file under `root`.
pub fn write_manifest(root: &Path) -> Result<PathBuf> {
    let mut text = String::new();
    for (rel, h) in hash_tree(root, &[MANIFEST])? {
        text.push_str(&format!("{h}  {rel}\n"));
    }
    let path = root.join(MANIFEST);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Re-hashes every file listed in the manifest; returns the mismatches.
pub fn verify_manifest(root: &Path) -> Result<Vec<String>> {
    let path = root.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut bad = Vec::new();
    for line in text.lines() {
        let (h, rel) = line
            .split_once("  ")
            .ok_or_else(|| Error::format("manifest", format!("bad line `{line}`")))?;
        let p = root.join(rel);
        if !p.is_file() || hash_file(&p)? != h {
            bad.push(rel.to_string());
        }
    }
    Ok(bad)
}

/// Creates `<out>/<command>-<UTC timestamp>`, adding a counter if that
/// name is taken. Never reuses an existing directory.
pub fn create_run_dir(out: &Path, command: &str) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    for n in 0.. {
        let name = if n == 0 {
            format!("{command}-{stamp}")
        } else {
            format!("{command}-{stamp}-{n}")
        };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("the counter is unbounded")
}

/// Writes the resolved config plus the command and input digests.
pub fn write_config_echo(dir: &Path, command: &str, config: &RunConfig, inputs: &[(&str, String)]) -> Result<()> {
    let mut map = config.to_map();
    map.insert("command".into(), command.into());
    for (k, v) in inputs {
        map.insert(format!("input.{k}"), v.clone());
    }
    let path = dir.join(CONFIG_ECHO);
    fs::write(&path, crate::config::render_kv(&map)).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_detects_changes() {
        let d = tempfile::tempdir().unwrap();
        fs::create_dir_all(d.path().join("a/b")).unwrap();
        fs::write(d.path().join("a/b/x.bin"), b"one").unwrap();
        fs::write(d.path().join("y.txt"), b"two").unwrap();
        write_manifest(d.path()).unwrap();
        assert!(verify_manifest(d.path()).unwrap().is_empty());
        fs::write(d.path().join("y.txt"), b"changed").unwrap();
        assert_eq!(verify_manifest(d.path()).unwrap(), vec!["y.txt".to_string()]);
        let files = list_files(d.path()).unwrap();
        assert_eq!(files, vec!["MANIFEST.sha256", "a/b/x.bin", "y.txt"]);
    }

    #[test]
    fn run_dirs_are_never_reused() {
        let d = tempfile::tempdir().unwrap();
        let a = create_run_dir(d.path(), "eval").unwrap();
        let b = create_run_dir(d.path(), "eval").unwrap();
        assert_ne!(a, b);
        assert!(a.is_dir() && b.is_dir());
    }
}
