//! Primitive libraries: a manifest plus network parameters in one container.
//!
//! Payload: `str manifest` (TOML, informational), `u32 count`, then per entry
//! `str id, f64 x3 center, f64 radius, u32 num_freqs, u32 feature_dim,
//! f64 max_rate, u32 n_meta, (str key, str value) x n_meta, structure network,
//! material network`.

use std::fmt::Write as _;
use std::path::Path;

use super::NeuralPrimitive;
use crate::autodiff::container::{frame, unframe, ByteReader, ByteWriter, ContainerKind};
use crate::error::{Error, Result};
use crate::geometry::NeuralSdf;
use crate::materials::NeuralMaterial;
use crate::math::Vec3;

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    pub id: String,
    pub primitive: NeuralPrimitive,
}

fn manifest(entries: &[LibraryEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let p = &e.primitive;
        let _ = writeln!(s, "[[primitive]]");
        let _ = writeln!(s, "id = {:?}", e.id);
        let c = p.structure.center;
        let _ = writeln!(s, "center = [{:?}, {:?}, {:?}]", c.x, c.y, c.z);
        let _ = writeln!(s, "radius = {:?}", p.structure.radius);
        let _ = writeln!(s, "feature_dim = {}", p.material.feature_dim);
        let _ = writeln!(s, "structure_params = {}", p.structure.net.len());
        let _ = writeln!(s, "material_params = {}", p.material.net.len());
        for (k, v) in &p.metadata {
            let _ = writeln!(s, "meta.{k} = {v:?}");
        }
    }
    s
}

pub fn save_library(entries: &[LibraryEntry]) -> Result<Vec<u8>> {
    let mut seen = std::collections::HashSet::new();
    let mut w = ByteWriter::default();
    w.str(&manifest(entries));
    w.u32(entries.len() as u32);
    for e in entries {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::DuplicatePrimitive(e.id.clone()));
        }
        let p = &e.primitive;
        w.str(&e.id);
        for v in p.structure.center.to_array() {
            w.f64(v);
        }
        w.f64(p.structure.radius);
        w.u32(p.structure.num_freqs as u32);
        w.u32(p.material.feature_dim as u32);
        w.f64(p.material.max_rate);
        w.u32(p.metadata.len() as u32);
        for (k, v) in &p.metadata {
            w.str(k);
            w.str(v);
        }
        w.network(&p.structure.net);
        w.network(&p.material.net);
    }
    Ok(frame(ContainerKind::Library, &w.buf))
}

pub fn load_library(bytes: &[u8]) -> Result<Vec<LibraryEntry>> {
    let mut r = ByteReader::new(unframe(bytes, ContainerKind::Library)?);
    let _manifest = r.str()?;
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let id = r.str()?;
        let center = Vec3::new(r.f64()?, r.f64()?, r.f64()?);
        let radius = r.f64()?;
        let num_freqs = r.u32()? as usize;
        let feature_dim = r.u32()? as usize;
        let max_rate = r.f64()?;
        let n_meta = r.u32()? as usize;
        let mut metadata = std::collections::BTreeMap::new();
        for _ in 0..n_meta {
            let k = r.str()?;
            metadata.insert(k, r.str()?);
        }
        let structure = NeuralSdf::new(r.network()?, center, radius, num_freqs)?;
        let material = NeuralMaterial::new(r.network()?, feature_dim, max_rate)?;
        let mut primitive = NeuralPrimitive::new(structure, material)?;
        primitive.metadata = metadata;
        out.push(LibraryEntry { id, primitive });
    }
    if !r.is_done() {
        return Err(Error::Format("trailing bytes after library entries".into()));
    }
    Ok(out)
}

pub fn write_library(path: &Path, entries: &[LibraryEntry]) -> Result<()> {
    std::fs::write(path, save_library(entries)?)?;
    Ok(())
}

pub fn read_library(path: &Path) -> Result<Vec<LibraryEntry>> {
    load_library(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::StructureConfig;
    use crate::materials::MaterialConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn entry(id: &str, seed: u64) -> LibraryEntry {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = NeuralSdf::new(
            crate::autodiff::MlpParams::kaiming_uniform(&StructureConfig::default().mlp(), &mut rng).unwrap(),
            Vec3::new(0.1, 0.0, -0.2),
            0.7,
            6,
        )
        .unwrap();
        let m = NeuralMaterial::init(&MaterialConfig::default(), 16, 6.0, &mut rng).unwrap();
        let mut p = NeuralPrimitive::new(s, m).unwrap();
        p.metadata.insert("iterations".into(), "1200".into());
        LibraryEntry { id: id.into(), primitive: p }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let lib = vec![entry("chair", 1), entry("desk", 2), entry("lamp", 3)];
        let a = save_library(&lib).unwrap();
        let back = load_library(&a).unwrap();
        assert_eq!(back, lib);
        let b = save_library(&back).unwrap();
        assert_eq!(a, b);
        let ids: Vec<&str> = back.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["chair", "desk", "lamp"]);
    }

    #[test]
    fn truncated_library_fails_checksum() {
        let a = save_library(&[entry("x", 4)]).unwrap();
        let err = load_library(&a[..a.len() - 10]).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut a = save_library(&[entry("x", 4)]).unwrap();
        a[4] = 9;
        // re-seal so only the version is wrong
        let n = a.len() - 32;
        let digest = <sha2::Sha256 as sha2::Digest>::digest(&a[..n]);
        a[n..].copy_from_slice(&digest);
        let err = load_library(&a).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(save_library(&[entry("x", 1), entry("x", 2)]).is_err());
    }
}
