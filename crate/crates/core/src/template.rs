//! Semantic annotations on the template topology.
//!
//! The toolkit accepts any topology-consistent template; what it needs to know
//! about it (region labels, landmark vertices, the contour band used for
//! silhouette selection) travels in a small JSON sidecar.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{read_obj, write_obj, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Eyes,
    Nose,
    Mouth,
    Cheek,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateAnnotations {
    pub regions: Vec<Region>,
    /// Vertices that count as "face" for evaluation.
    pub face_mask: Vec<bool>,
    /// Cheek/jaw band searched for silhouette vertices.
    pub contour_band: Vec<usize>,
    pub left_eye: Vec<usize>,
    pub right_eye: Vec<usize>,
    pub mouth: Vec<usize>,
    pub outer_eye_corners: [usize; 2],
}

impl TemplateAnnotations {
    pub fn validate(&self, vertex_count: usize) -> Result<()> {
        if self.regions.len() != vertex_count || self.face_mask.len() != vertex_count {
            return Err(Error::LengthMismatch {
                what: "template annotations",
                expected: vertex_count,
                actual: self.regions.len().min(self.face_mask.len()),
            });
        }
        let all = self
            .contour_band
            .iter()
            .chain(&self.left_eye)
            .chain(&self.right_eye)
            .chain(&self.mouth)
            .chain(&self.outer_eye_corners);
        if let Some(&bad) = all.into_iter().find(|&&i| i >= vertex_count) {
            return Err(Error::InvalidParameter(format!("annotation vertex {bad} out of range")));
        }
        Ok(())
    }

    /// Edge landmark vertices: both eyes then the mouth.
    pub fn edge_landmarks(&self) -> Vec<usize> {
        self.left_eye.iter().chain(&self.right_eye).chain(&self.mouth).copied().collect()
    }

    pub fn eye_landmarks(&self) -> Vec<usize> {
        self.left_eye.iter().chain(&self.right_eye).copied().collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// A template mesh plus its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceTemplate {
    pub mesh: Mesh,
    pub annotations: TemplateAnnotations,
}

impl FaceTemplate {
    pub fn new(mesh: Mesh, annotations: TemplateAnnotations) -> Result<Self> {
        annotations.validate(mesh.vertex_count())?;
        Ok(FaceTemplate { mesh, annotations })
    }

    /// Reads an OBJ template and its `<stem>.json` annotations.
    pub fn load(obj: &Path) -> Result<Self> {
        let ann = obj.with_extension("json");
        let text = std::fs::read_to_string(&ann).map_err(|e| Error::io(&ann, e))?;
        Self::new(read_obj(obj)?, TemplateAnnotations::from_json(&text)?)
    }

    /// Writes the mesh to `obj` and the annotations next to it.
    pub fn save(&self, obj: &Path) -> Result<()> {
        write_obj(&self.mesh, obj)?;
        let ann = obj.with_extension("json");
        std::fs::write(&ann, self.annotations.to_json()?).map_err(|e| Error::io(&ann, e))
    }

    /// Outer interocular distance measured on `mesh` (template topology).
    pub fn interocular(&self, mesh: &Mesh) -> f64 {
        let [a, b] = self.annotations.outer_eye_corners;
        (mesh.vertices[a] - mesh.vertices[b]).norm()
    }
}
