//! Scene composition: placed primitives, radios, edits and persistence.

pub mod antenna;
pub mod config;
pub mod library;
pub mod pose;

use std::collections::{BTreeMap, HashSet};

use num_complex::Complex64;
use rand::Rng;

use crate::autodiff::ParamKey;
use crate::error::{Error, Result};
use crate::geometry::{AnalyticSdf, Field, NeuralSdf, StructureConfig};
use crate::materials::{ClassicalMaterial, MaterialConfig, NeuralMaterial};
use crate::math::Vec3;

pub use antenna::{antenna_weight, AntennaPattern};
pub use library::{load_library, read_library, save_library, write_library, LibraryEntry};
pub use pose::{Pose, PoseVar, Quat};

/// Structure plus material network for one learnable object.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralPrimitive {
    pub structure: NeuralSdf,
    pub material: NeuralMaterial,
    pub metadata: BTreeMap<String, String>,
}

impl NeuralPrimitive {
    pub fn new(structure: NeuralSdf, material: NeuralMaterial) -> Result<Self> {
        if structure.feature_dim() != material.feature_dim {
            return Err(Error::Shape(format!(
                "structure emits {} features, material expects {}",
                structure.feature_dim(),
                material.feature_dim
            )));
        }
        Ok(Self { structure, material, metadata: BTreeMap::new() })
    }

    /// Sphere-initialized structure and a fresh material network.
    pub fn init<G: Rng + ?Sized>(
        scfg: &StructureConfig,
        mcfg: &MaterialConfig,
        bound_radius: f64,
        init_radius: f64,
        max_rate: f64,
        rng: &mut G,
    ) -> Result<Self> {
        let s = NeuralSdf::geometric_init(scfg, Vec3::ZERO, bound_radius, init_radius, rng)?;
        let m = NeuralMaterial::init(mcfg, scfg.feature_dim, max_rate, rng)?;
        Self::new(s, m)
    }

    /// SHA-256 over both networks.
    pub fn digest(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.structure.net.digest());
        h.update(self.material.net.digest());
        h.finalize().into()
    }
}

/// Surface behaviour of a closed-form primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfaceModel {
    /// Fresnel reflection, transmission amplitude `sqrt(1 - |R|^2)`.
    Classical(ClassicalMaterial),
    /// Terminates every ray that touches it.
    Absorber,
    /// Reflects with a fixed coefficient and never transmits.
    Mirror(Complex64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    Neural(NeuralPrimitive),
    Analytic { sdf: AnalyticSdf, surface: SurfaceModel },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedPrimitive {
    pub id: String,
    pub payload: Payload,
    pub pose: Pose,
    /// Network parameters excluded from optimization.
    pub frozen: bool,
    /// Pose included in pose adaptation.
    pub dynamic: bool,
}

impl PlacedPrimitive {
    pub fn neural(id: &str, prim: NeuralPrimitive, pose: Pose) -> Self {
        Self { id: id.to_string(), payload: Payload::Neural(prim), pose, frozen: false, dynamic: false }
    }

    pub fn analytic(id: &str, sdf: AnalyticSdf, surface: SurfaceModel, pose: Pose) -> Self {
        Self { id: id.to_string(), payload: Payload::Analytic { sdf, surface }, pose, frozen: true, dynamic: false }
    }

    pub fn frozen(mut self, yes: bool) -> Self {
        self.frozen = yes;
        self
    }

    pub fn dynamic(mut self, yes: bool) -> Self {
        self.dynamic = yes;
        self
    }

    /// World-space bounding sphere, `None` for unbounded shapes.
    pub fn world_bound(&self) -> Option<(Vec3, f64)> {
        match &self.payload {
            Payload::Neural(p) => Some((self.pose.point_to_world(p.structure.center), p.structure.radius)),
            Payload::Analytic { sdf, .. } => sdf.bounding_radius().map(|r| (self.pose.translation, r)),
        }
    }

    /// Signed distance of the world point `p` to this primitive's surface.
    pub fn distance(&self, p: Vec3) -> f64 {
        let q = self.pose.point_to_object(p);
        match &self.payload {
            Payload::Neural(np) => np.structure.field(None).eval::<f64>(q),
            Payload::Analytic { sdf, .. } => sdf.eval::<f64>(q),
        }
    }

    pub fn as_neural(&self) -> Option<&NeuralPrimitive> {
        match &self.payload {
            Payload::Neural(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_neural_mut(&mut self) -> Option<&mut NeuralPrimitive> {
        match &mut self.payload {
            Payload::Neural(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadioRole {
    Tx,
    Rx,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Radio {
    pub id: String,
    pub role: RadioRole,
    pub position: Vec3,
    pub orientation: Quat,
    pub pattern: AntennaPattern,
    /// Reference field at 1 m (transmitters).
    pub amplitude: f64,
}

impl Radio {
    pub fn tx(id: &str, position: Vec3) -> Self {
        Self {
            id: id.to_string(),
            role: RadioRole::Tx,
            position,
            orientation: Quat::IDENTITY,
            pattern: AntennaPattern::Isotropic,
            amplitude: 1.0,
        }
    }

    pub fn rx(id: &str, position: Vec3) -> Self {
        Self { role: RadioRole::Rx, ..Self::tx(id, position) }
    }

    pub fn at(&self, position: Vec3) -> Self {
        Self { position, ..self.clone() }
    }

    /// Antenna weight for a world-space unit direction.
    pub fn gain(&self, world_dir: Vec3) -> f64 {
        match self.pattern {
            AntennaPattern::Isotropic => 1.0,
            _ => self.pattern.weight(self.orientation.inverse_rotate(world_dir)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::Config(format!("radio '{}' has a non-finite position", self.id)));
        }
        if self.role == RadioRole::Tx && !(self.amplitude > 0.0) {
            return Err(Error::Config(format!("transmitter '{}' needs a positive amplitude", self.id)));
        }
        if (self.orientation.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("radio '{}' orientation is not a unit quaternion", self.id)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl Bounds {
    pub fn cube(half: f64) -> Self {
        Self { min: Vec3::new(-half, -half, -half), max: Vec3::new(half, half, half) }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x && p.y >= self.min.y && p.z >= self.min.z && p.x <= self.max.x && p.y <= self.max.y && p.z <= self.max.z
    }

    pub fn contains_sphere(&self, c: Vec3, r: f64) -> bool {
        let d = Vec3::new(r, r, r);
        self.contains(c - d) && self.contains(c + d)
    }

    /// Distance along a ray from an inside point to the box boundary.
    pub fn exit_distance(&self, o: Vec3, d: Vec3) -> f64 {
        let mut t = f64::INFINITY;
        for i in 0..3 {
            let (oi, di) = (o.get(i), d.get(i));
            if di > 0.0 {
                t = t.min((self.max.get(i) - oi) / di);
            } else if di < 0.0 {
                t = t.min((self.min.get(i) - oi) / di);
            }
        }
        t.max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub primitives: Vec<PlacedPrimitive>,
    pub radios: Vec<Radio>,
    pub bounds: Bounds,
    pub frequencies: Vec<f64>,
}

#[derive(Clone, Debug)]
pub enum Edit {
    Add(PlacedPrimitive),
    Remove(String),
    Move(String, Pose),
}

/// Gradient key of a primitive's network; `part` 0 is structure, 1 material.
pub fn param_key(index: usize, part: u8) -> ParamKey {
    ParamKey::new(index as u32, part)
}

pub const STRUCTURE_PART: u8 = 0;
pub const MATERIAL_PART: u8 = 1;

impl Scene {
    pub fn new(primitives: Vec<PlacedPrimitive>, radios: Vec<Radio>, bounds: Bounds, frequencies: Vec<f64>) -> Result<Self> {
        let s = Self { primitives, radios, bounds, frequencies };
        s.validate()?;
        Ok(s)
    }

    pub fn empty(bounds: Bounds, frequency: f64) -> Self {
        Self { primitives: Vec::new(), radios: Vec::new(), bounds, frequencies: vec![frequency] }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for p in &self.primitives {
            if !ids.insert(p.id.as_str()) {
                return Err(Error::DuplicatePrimitive(p.id.clone()));
            }
            p.pose.validate()?;
            if let Payload::Analytic { sdf, surface } = &p.payload {
                sdf.validate()?;
                if let SurfaceModel::Classical(m) = surface {
                    m.validate()?;
                }
            }
            if let Some((c, r)) = p.world_bound() {
                if !self.bounds.contains_sphere(c, r) {
                    return Err(Error::Config(format!("primitive '{}' extends outside the scene bounds", p.id)));
                }
            }
        }
        let mut rids = HashSet::new();
        for r in &self.radios {
            if !rids.insert(r.id.as_str()) {
                return Err(Error::Config(format!("duplicate radio id '{}'", r.id)));
            }
            r.validate()?;
            if !self.bounds.contains(r.position) {
                return Err(Error::Config(format!("radio '{}' is outside the scene bounds", r.id)));
            }
        }
        if self.frequencies.is_empty() || self.frequencies.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Config("scene needs at least one positive frequency".into()));
        }
        Ok(())
    }

    /// Smallest signed distance over all primitives; `+inf` when empty.
    pub fn distance(&self, p: Vec3) -> f64 {
        self.primitives.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min)
    }

    pub fn radio(&self, id: &str) -> Result<&Radio> {
        self.radios.iter().find(|r| r.id == id).ok_or_else(|| Error::UnknownRadio(id.to_string()))
    }

    pub fn primitive_index(&self, id: &str) -> Result<usize> {
        self.primitives.iter().position(|p| p.id == id).ok_or_else(|| Error::UnknownPrimitive(id.to_string()))
    }

    pub fn primitive(&self, id: &str) -> Result<&PlacedPrimitive> {
        Ok(&self.primitives[self.primitive_index(id)?])
    }

    pub fn frequency(&self) -> f64 {
        self.frequencies[0]
    }

    pub fn with_primitive(mut self, p: PlacedPrimitive) -> Self {
        self.primitives.push(p);
        self
    }

    pub fn with_radio(mut self, r: Radio) -> Self {
        self.radios.push(r);
        self
    }

    pub fn apply_edit(&self, edit: Edit) -> Result<Scene> {
        let mut next = self.clone();
        match edit {
            Edit::Add(p) => {
                if next.primitives.iter().any(|q| q.id == p.id) {
                    return Err(Error::DuplicatePrimitive(p.id));
                }
                next.primitives.push(p);
            }
            Edit::Remove(id) => {
                let i = next.primitive_index(&id)?;
                next.primitives.remove(i);
            }
            Edit::Move(id, pose) => {
                pose.validate()?;
                let i = next.primitive_index(&id)?;
                next.primitives[i].pose = pose;
            }
        }
        next.validate()?;
        Ok(next)
    }
}

/// Apply one edit, returning a new scene.
pub fn apply_edit(scene: &Scene, edit: Edit) -> Result<Scene> {
    scene.apply_edit(edit)
}
