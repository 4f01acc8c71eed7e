//! TOML scene files.
//!
//! ```toml
//! frequencies = [2.4e9]
//! library = "objects.rfsc"          # optional, relative to the scene file
//!
//! [bounds]
//! min = [-5.0, -5.0, -5.0]
//! max = [5.0, 5.0, 5.0]
//!
//! [materials.drywall]               # optional additions/overrides
//! eps_r = 2.9
//! sigma = 0.02
//!
//! [[patterns]]
//! id = "sector"
//! step_deg = 5.0
//! gains = [...]                     # 37 rows (elevation -90..90) x 72 columns
//!
//! [[radios]]
//! id = "ap"
//! role = "tx"                       # or "rx"
//! position = [0.0, 0.0, 1.0]
//! rotation = [1.0, 0.0, 0.0, 0.0]  # optional (w, x, y, z)
//! pattern = "sector"                # optional, isotropic otherwise
//! amplitude = 1.0                   # optional
//!
//! [[primitives]]
//! id = "floor"
//! shape = { type = "plane", normal = [0.0, 0.0, 1.0], offset = 0.0 }
//! material = "concrete"             # or surface = "absorber" / mirror = [re, im]
//!
//! [[primitives]]
//! id = "chair"
//! library_id = "chair"
//! translation = [1.0, 0.5, 0.0]
//! rotation = [1.0, 0.0, 0.0, 0.0]
//! frozen = false
//! dynamic = true
//! ```
//!
//! Shapes: `sphere {center, radius}`, `box {center, half}`, `plane {normal,
//! offset}` (solid where `n.p <= offset`), `union {parts}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::library::{read_library, LibraryEntry};
use super::{AntennaPattern, Bounds, Payload, PlacedPrimitive, Pose, Quat, Radio, RadioRole, Scene, SurfaceModel};
use crate::error::{Error, Result};
use crate::geometry::AnalyticSdf;
use crate::materials::{ClassicalMaterial, MaterialTable};
use crate::math::Vec3;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub frequencies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library: Option<String>,
    pub bounds: BoundsFile,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub materials: BTreeMap<String, MaterialFile>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub patterns: Vec<PatternFile>,
    #[serde(default)]
    pub radios: Vec<RadioFile>,
    #[serde(default)]
    pub primitives: Vec<PrimitiveFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    pub eps_r: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PatternFile {
    pub id: String,
    pub step_deg: f64,
    pub gains: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RadioFile {
    pub id: String,
    pub role: String,
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeFile {
    Sphere { center: [f64; 3], radius: f64 },
    Box { center: [f64; 3], half: [f64; 3] },
    Plane { normal: [f64; 3], offset: f64 },
    Union { parts: Vec<ShapeFile> },
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PrimitiveFile {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub library_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surface: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mirror: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamic: Option<bool>,
}

fn shape_to_sdf(s: &ShapeFile) -> AnalyticSdf {
    match s {
        ShapeFile::Sphere { center, radius } => AnalyticSdf::sphere(Vec3::from_array(*center), *radius),
        ShapeFile::Box { center, half } => AnalyticSdf::cuboid(Vec3::from_array(*center), Vec3::from_array(*half)),
        ShapeFile::Plane { normal, offset } => AnalyticSdf::Plane { normal: Vec3::from_array(*normal), offset: *offset },
        ShapeFile::Union { parts } => AnalyticSdf::Union(parts.iter().map(shape_to_sdf).collect()),
    }
}

fn sdf_to_shape(s: &AnalyticSdf) -> ShapeFile {
    match s {
        AnalyticSdf::Sphere { center, radius } => ShapeFile::Sphere { center: center.to_array(), radius: *radius },
        AnalyticSdf::Box { center, half } => ShapeFile::Box { center: center.to_array(), half: half.to_array() },
        AnalyticSdf::Plane { normal, offset } => ShapeFile::Plane { normal: normal.to_array(), offset: *offset },
        AnalyticSdf::Union(parts) => ShapeFile::Union { parts: parts.iter().map(sdf_to_shape).collect() },
    }
}

fn quat(r: Option<[f64; 4]>) -> Quat {
    r.map(|[w, x, y, z]| Quat::new(w, x, y, z)).unwrap_or(Quat::IDENTITY)
}

fn rotation_field(q: Quat) -> Option<[f64; 4]> {
    (q != Quat::IDENTITY).then_some([q.w, q.x, q.y, q.z])
}

impl SceneFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("scene file: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("scene file: {e}")))
    }

    /// Resolve into a scene; `library` supplies entries for `library_id`.
    pub fn build(&self, library: &[LibraryEntry]) -> Result<Scene> {
        let mut table = MaterialTable::default();
        for (name, m) in &self.materials {
            table.insert(name, ClassicalMaterial { eps_r: m.eps_r, sigma: m.sigma })?;
        }
        let mut patterns = BTreeMap::new();
        for p in &self.patterns {
            patterns.insert(p.id.clone(), AntennaPattern::tabulated(p.step_deg, p.gains.clone())?);
        }
        let mut radios = Vec::new();
        for r in &self.radios {
            let role = match r.role.as_str() {
                "tx" => RadioRole::Tx,
                "rx" => RadioRole::Rx,
                other => return Err(Error::Config(format!("radio '{}': unknown role '{other}'", r.id))),
            };
            let pattern = match &r.pattern {
                None => AntennaPattern::Isotropic,
                Some(id) => patterns
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("radio '{}': unknown pattern '{id}'", r.id)))?,
            };
            radios.push(Radio {
                id: r.id.clone(),
                role,
                position: Vec3::from_array(r.position),
                orientation: quat(r.rotation),
                pattern,
                amplitude: r.amplitude.unwrap_or(1.0),
            });
        }
        let mut prims = Vec::new();
        for p in &self.primitives {
            let pose = Pose::new(quat(p.rotation), Vec3::from_array(p.translation.unwrap_or([0.0; 3])))?;
            let placed = match (&p.library_id, &p.shape) {
                (Some(lib_id), None) => {
                    let entry = library
                        .iter()
                        .find(|e| &e.id == lib_id)
                        .ok_or_else(|| Error::Config(format!("primitive '{}': '{lib_id}' not in library", p.id)))?;
                    PlacedPrimitive {
                        id: p.id.clone(),
                        payload: Payload::Neural(entry.primitive.clone()),
                        pose,
                        frozen: p.frozen.unwrap_or(false),
                        dynamic: p.dynamic.unwrap_or(false),
                    }
                }
                (None, Some(shape)) => {
                    let surface = match (&p.material, &p.surface, p.mirror) {
                        (Some(m), None, None) => SurfaceModel::Classical(table.get(m)?),
                        (None, Some(s), None) if s == "absorber" => SurfaceModel::Absorber,
                        (None, None, Some([re, im])) => SurfaceModel::Mirror(Complex64::new(re, im)),
                        _ => {
                            return Err(Error::Config(format!(
                                "primitive '{}' needs exactly one of material, surface = \"absorber\" or mirror",
                                p.id
                            )))
                        }
                    };
                    PlacedPrimitive {
                        id: p.id.clone(),
                        payload: Payload::Analytic { sdf: shape_to_sdf(shape), surface },
                        pose,
                        frozen: p.frozen.unwrap_or(true),
                        dynamic: p.dynamic.unwrap_or(false),
                    }
                }
                _ => {
                    return Err(Error::Config(format!("primitive '{}' needs exactly one of library_id or shape", p.id)))
                }
            };
            prims.push(placed);
        }
        let bounds = Bounds { min: Vec3::from_array(self.bounds.min), max: Vec3::from_array(self.bounds.max) };
        Scene::new(prims, radios, bounds, self.frequencies.clone())
    }

    /// Describe `scene`; neural primitives are referenced by their own id
    /// in the library named `library`.
    pub fn from_scene(scene: &Scene, library: Option<&str>) -> Result<Self> {
        let mut materials = BTreeMap::new();
        let mut patterns = Vec::new();
        let mut radios = Vec::new();
        for r in &scene.radios {
            let pattern = match &r.pattern {
                AntennaPattern::Isotropic => None,
                AntennaPattern::Tabulated { step_deg, gains } => {
                    let id = format!("{}_pattern", r.id);
                    patterns.push(PatternFile { id: id.clone(), step_deg: *step_deg, gains: gains.clone() });
                    Some(id)
                }
            };
            radios.push(RadioFile {
                id: r.id.clone(),
                role: match r.role {
                    RadioRole::Tx => "tx".into(),
                    RadioRole::Rx => "rx".into(),
                },
                position: r.position.to_array(),
                rotation: rotation_field(r.orientation),
                pattern,
                amplitude: (r.amplitude != 1.0).then_some(r.amplitude),
            });
        }
        let mut prims = Vec::new();
        for p in &scene.primitives {
            let mut f = PrimitiveFile {
                id: p.id.clone(),
                translation: (p.pose.translation != Vec3::ZERO).then_some(p.pose.translation.to_array()),
                rotation: rotation_field(p.pose.rotation),
                dynamic: p.dynamic.then_some(true),
                ..Default::default()
            };
            match &p.payload {
                Payload::Neural(_) => {
                    if library.is_none() {
                        return Err(Error::Config("scene has neural primitives but no library path".into()));
                    }
                    f.library_id = Some(p.id.clone());
                    f.frozen = p.frozen.then_some(true);
                }
                Payload::Analytic { sdf, surface } => {
                    f.shape = Some(sdf_to_shape(sdf));
                    f.frozen = (!p.frozen).then_some(false);
                    match surface {
                        SurfaceModel::Classical(m) => {
                            let name = format!("{}_material", p.id);
                            materials.insert(name.clone(), MaterialFile { eps_r: m.eps_r, sigma: m.sigma });
                            f.material = Some(name);
                        }
                        SurfaceModel::Absorber => f.surface = Some("absorber".into()),
                        SurfaceModel::Mirror(c) => f.mirror = Some([c.re, c.im]),
                    }
                }
            }
            prims.push(f);
        }
        Ok(Self {
            frequencies: scene.frequencies.clone(),
            library: library.map(str::to_string),
            bounds: BoundsFile { min: scene.bounds.min.to_array(), max: scene.bounds.max.to_array() },
            materials,
            patterns,
            radios,
            primitives: prims,
        })
    }
}

/// Neural primitives of `scene` as library entries keyed by primitive id.
pub fn scene_library(scene: &Scene) -> Vec<LibraryEntry> {
    scene
        .primitives
        .iter()
        .filter_map(|p| p.as_neural().map(|n| LibraryEntry { id: p.id.clone(), primitive: n.clone() }))
        .collect()
}

pub fn parse_scene(text: &str, base_dir: &Path) -> Result<Scene> {
    let file = SceneFile::parse(text)?;
    let library = match &file.library {
        Some(rel) => read_library(&resolve(base_dir, rel))?,
        None => Vec::new(),
    };
    file.build(&library)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    let text = std::fs::read_to_string(path)?;
    parse_scene(&text, path.parent().unwrap_or(Path::new(".")))
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Write `scene` to `path`; neural primitives go to the library file
/// `library` (relative to the scene file's directory).
pub fn save_scene(path: &Path, scene: &Scene, library: Option<&str>) -> Result<()> {
    let file = SceneFile::from_scene(scene, library)?;
    if let Some(rel) = library {
        let base = path.parent().unwrap_or(Path::new("."));
        super::library::write_library(&resolve(base, rel), &scene_library(scene))?;
    }
    std::fs::write(path, file.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROOM: &str = r#"
frequencies = [2.4e9]

[bounds]
min = [-5.0, -5.0, -1.0]
max = [5.0, 5.0, 4.0]

[materials.drywall]
eps_r = 2.9
sigma = 0.02

[[radios]]
id = "tx"
role = "tx"
position = [0.0, 0.0, 1.0]

[[radios]]
id = "rx"
role = "rx"
position = [2.0, 0.0, 1.0]
amplitude = 1.0

[[primitives]]
id = "floor"
shape = { type = "plane", normal = [0.0, 0.0, 1.0], offset = 0.0 }
material = "concrete"

[[primitives]]
id = "pillar"
shape = { type = "box", center = [0.0, 0.0, 0.0], half = [0.2, 0.2, 1.0] }
material = "drywall"
translation = [1.0, 2.0, 1.0]

[[primitives]]
id = "blocker"
shape = { type = "sphere", center = [0.0, 0.0, 0.0], radius = 0.3 }
surface = "absorber"
translation = [-2.0, 0.0, 1.0]
"#;

    #[test]
    fn parses_room() {
        let s = parse_scene(ROOM, Path::new(".")).unwrap();
        assert_eq!(s.primitives.len(), 3);
        assert_eq!(s.radio("rx").unwrap().role, RadioRole::Rx);
        let Payload::Analytic { surface: SurfaceModel::Classical(m), .. } = &s.primitive("pillar").unwrap().payload else {
            panic!("pillar should be classical");
        };
        assert_eq!(m.eps_r, 2.9);
        assert_eq!(s.primitive("floor").unwrap().world_bound(), None);
    }

    #[test]
    fn describe_then_build_round_trips() {
        let s = parse_scene(ROOM, Path::new(".")).unwrap();
        let f = SceneFile::from_scene(&s, None).unwrap();
        let text = f.to_toml().unwrap();
        let again = parse_scene(&text, Path::new(".")).unwrap();
        assert_eq!(again, s);
        assert_eq!(SceneFile::from_scene(&again, None).unwrap().to_toml().unwrap(), text);
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(parse_scene("frequencies = [", Path::new(".")).is_err());
        let bad_role = ROOM.replace("role = \"rx\"", "role = \"relay\"");
        assert!(parse_scene(&bad_role, Path::new(".")).is_err());
        let no_surface = ROOM.replace("surface = \"absorber\"\n", "");
        assert!(parse_scene(&no_surface, Path::new(".")).is_err());
        let missing_lib = format!("{ROOM}\n[[primitives]]\nid = \"chair\"\nlibrary_id = \"chair\"\n");
        assert!(parse_scene(&missing_lib, Path::new(".")).is_err());
        let outside = ROOM.replace("position = [2.0, 0.0, 1.0]", "position = [20.0, 0.0, 1.0]");
        assert!(parse_scene(&outside, Path::new(".")).is_err());
    }
}
