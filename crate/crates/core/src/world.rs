//! Synthetic semantic world and the encoders over it.
//!
//! The world fixes a set of class anchors in a shared d-dimensional space and
//! a per-modality lift into that modality's raw feature space. Teacher
//! encoders (image, text) invert the lift exactly and are frozen; student
//! encoders see a rotated view of the anchor space and must learn the
//! alignment through a small trainable head.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OmniBindError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::{self, l2_normalize_rows, unit_direction, Tensor};

/// The seven modalities, in canonical order.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ModalityId {
    Image,
    Text,
    Audio,
    PointCloud,
    Event,
    Touch,
    Thermal,
}

/// Whether a modality's encoder is frozen (teacher) or trainable (student).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Teacher,
    Student,
}

impl ModalityId {
    pub const ALL: [ModalityId; 7] = [
        ModalityId::Image,
        ModalityId::Text,
        ModalityId::Audio,
        ModalityId::PointCloud,
        ModalityId::Event,
        ModalityId::Touch,
        ModalityId::Thermal,
    ];

    pub const STUDENTS: [ModalityId; 5] = [
        ModalityId::Audio,
        ModalityId::PointCloud,
        ModalityId::Event,
        ModalityId::Touch,
        ModalityId::Thermal,
    ];

    /// Image and text are the data-abundant teachers; the rest are students.
    pub fn role(self) -> Role {
        match self {
            ModalityId::Image | ModalityId::Text => Role::Teacher,
            _ => Role::Student,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModalityId::Image => "image",
            ModalityId::Text => "text",
            ModalityId::Audio => "audio",
            ModalityId::PointCloud => "point_cloud",
            ModalityId::Event => "event",
            ModalityId::Touch => "touch",
            ModalityId::Thermal => "thermal",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        ModalityId::ALL
            .iter()
            .copied()
            .find(|m| m.name() == name)
            .ok_or_else(|| OmniBindError::UnknownModality { name: name.into() })
    }

    /// Stable index into `ALL`.
    pub fn index(self) -> usize {
        ModalityId::ALL.iter().position(|m| *m == self).unwrap()
    }
}

impl fmt::Display for ModalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Prompt with exactly one `{label}` placeholder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    template: String,
}

pub const PLACEHOLDER: &str = "{label}";

impl PromptTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.matches(PLACEHOLDER).count() != 1 {
            return Err(OmniBindError::Config {
                field: "template".into(),
                message: format!("must contain exactly one {PLACEHOLDER} placeholder"),
            });
        }
        Ok(PromptTemplate { template })
    }

    /// `"a photo of a {label}"`.
    pub fn photo() -> Self {
        PromptTemplate::new("a photo of a {label}").unwrap()
    }

    /// Bare `{label}`: no surrounding text, so no perturbation.
    pub fn identity() -> Self {
        PromptTemplate::new(PLACEHOLDER).unwrap()
    }

    pub fn render(&self, label: &str) -> String {
        self.template.replace(PLACEHOLDER, label)
    }

    /// The text around the placeholder; an empty context means the template
    /// adds nothing to the label.
    pub fn context(&self) -> String {
        self.template.replace(PLACEHOLDER, "")
    }
}

/// FNV-1a, fixed so hashes are stable across builds and platforms.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// World generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub seed: u64,
    pub num_classes: usize,
    pub dim: usize,
    /// Raw feature dimension per modality; defaults cover all seven.
    pub feature_dims: BTreeMap<ModalityId, usize>,
    /// Sample noise scale per modality (norm of the perturbation added to the
    /// class anchor before lifting).
    pub sigma: BTreeMap<ModalityId, f64>,
    /// Upper bound on pairwise anchor cosine; anchors are re-drawn until all
    /// pairs satisfy it.
    pub anchor_max_cos: f64,
    /// Norm of the template-context perturbation added to label prompts.
    pub template_jitter: f64,
    /// Norm of the per-record description perturbation.
    pub description_noise: f64,
    /// Records per class for teacher modalities.
    pub teacher_per_class: usize,
    /// Records per class for student modalities (data-poor side).
    pub student_per_class: usize,
    /// Surface forms per class in the synonym table.
    pub synonyms_per_class: usize,
    /// Hidden width of student heads; 0 means 2 * dim.
    pub head_hidden: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let feature_dims = [
            (ModalityId::Image, 64),
            (ModalityId::Text, 48),
            (ModalityId::Audio, 48),
            (ModalityId::PointCloud, 40),
            (ModalityId::Event, 56),
            (ModalityId::Touch, 40),
            (ModalityId::Thermal, 36),
        ]
        .into_iter()
        .collect();
        let sigma = ModalityId::ALL.iter().map(|m| (*m, 0.05)).collect();
        WorldConfig {
            seed: 7,
            num_classes: 16,
            dim: 32,
            feature_dims,
            sigma,
            anchor_max_cos: 0.5,
            template_jitter: 0.1,
            description_noise: 0.1,
            teacher_per_class: 200,
            student_per_class: 40,
            synonyms_per_class: 3,
            head_hidden: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(OmniBindError::Config {
                field: "world.num_classes".into(),
                message: "need at least 2 classes".into(),
            });
        }
        if self.dim == 0 {
            return Err(OmniBindError::Config {
                field: "world.dim".into(),
                message: "dimension must be positive".into(),
            });
        }
        for m in ModalityId::ALL {
            let f = self.feature_dim(m);
            if f < self.dim {
                return Err(OmniBindError::Config {
                    field: format!("world.feature_dims.{m}"),
                    message: format!("must be >= dim ({}), got {f}", self.dim),
                });
            }
            if self.sigma_for(m) < 0.0 {
                return Err(OmniBindError::Config {
                    field: format!("world.sigma.{m}"),
                    message: "noise scale must be non-negative".into(),
                });
            }
        }
        if !(0.0 < self.anchor_max_cos && self.anchor_max_cos < 1.0) {
            return Err(OmniBindError::Config {
                field: "world.anchor_max_cos".into(),
                message: "must lie in (0, 1)".into(),
            });
        }
        if self.synonyms_per_class == 0 {
            return Err(OmniBindError::Config {
                field: "world.synonyms_per_class".into(),
                message: "need at least one surface form".into(),
            });
        }
        Ok(())
    }

    pub fn feature_dim(&self, modality: ModalityId) -> usize {
        self.feature_dims.get(&modality).copied().unwrap_or(self.dim)
    }

    pub fn sigma_for(&self, modality: ModalityId) -> f64 {
        self.sigma.get(&modality).copied().unwrap_or(0.05)
    }

    pub fn hidden_dim(&self) -> usize {
        if self.head_hidden == 0 {
            2 * self.dim
        } else {
            self.head_hidden
        }
    }

    pub fn records_per_class(&self, modality: ModalityId) -> usize {
        match modality.role() {
            Role::Teacher => self.teacher_per_class,
            Role::Student => self.student_per_class,
        }
    }
}

/// The frozen semantic world: anchors, per-modality lifts, student-side
/// feature rotations, and the synonym table.
#[derive(Clone, Debug)]
pub struct SemanticWorld {
    pub config: WorldConfig,
    /// C x d unit anchors, pairwise cosine <= `anchor_max_cos`.
    pub anchors: Tensor,
    /// Per modality: feature_dim x d matrix with orthonormal columns. Raw
    /// features live in the column space of the lift.
    lifts: BTreeMap<ModalityId, Tensor>,
    /// Per student modality: orthogonal d x d rotation folded into the frozen
    /// featurizer, so raw student features are misaligned until the head is
    /// trained.
    mixes: BTreeMap<ModalityId, Tensor>,
    /// surface label -> canonical class id.
    pub synonyms: BTreeMap<String, usize>,
}

/// Gram-Schmidt on random Gaussian columns: rows x cols, orthonormal columns.
fn orthonormal_columns(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    assert!(rows >= cols);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cols);
    while basis.len() < cols {
        let mut v = unit_direction(rows, rng);
        for b in &basis {
            let proj = tensor::dot(&v, b);
            for (vi, bi) in v.iter_mut().zip(b.iter()) {
                *vi -= proj * bi;
            }
        }
        let n = tensor::norm(&v);
        if n > 1e-6 {
            for vi in v.iter_mut() {
                *vi /= n;
            }
            basis.push(v);
        }
    }
    let mut out = Tensor::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for i in 0..rows {
            out.set(i, j, b[i]);
        }
    }
    out
}

fn draw_anchors(num: usize, dim: usize, max_cos: f64, rng: &mut impl Rng) -> Tensor {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(num);
    while rows.len() < num {
        let candidate = unit_direction(dim, rng);
        let ok = rows
            .iter()
            .all(|r| tensor::dot(r, &candidate).abs() <= max_cos);
        if ok {
            rows.push(candidate);
        }
    }
    Tensor::from_rows(&rows).unwrap()
}

/// Canonical label text for a class.
pub fn class_label(class: usize) -> String {
    format!("class{class:03}")
}

/// Surface forms for a class; form 0 is the canonical label itself.
pub fn surface_form(class: usize, form: usize) -> String {
    match form {
        0 => class_label(class),
        1 => format!("cls{class:03}"),
        2 => format!("item{class:03}"),
        n => format!("syn{n}_{class:03}"),
    }
}

impl SemanticWorld {
    pub fn generate(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let anchors = draw_anchors(
            config.num_classes,
            config.dim,
            config.anchor_max_cos,
            &mut rng,
        );
        let mut lifts = BTreeMap::new();
        for m in ModalityId::ALL {
            lifts.insert(
                m,
                orthonormal_columns(config.feature_dim(m), config.dim, &mut rng),
            );
        }
        let mut mixes = BTreeMap::new();
        for m in ModalityId::STUDENTS {
            mixes.insert(m, orthonormal_columns(config.dim, config.dim, &mut rng));
        }
        let mut synonyms = BTreeMap::new();
        for c in 0..config.num_classes {
            for form in 0..config.synonyms_per_class {
                synonyms.insert(surface_form(c, form), c);
            }
        }
        Ok(SemanticWorld {
            config,
            anchors,
            lifts,
            mixes,
            synonyms,
        })
    }

    /// Rebuild from previously stored parts (file loading path).
    pub fn from_parts(
        config: WorldConfig,
        anchors: Tensor,
        lifts: BTreeMap<ModalityId, Tensor>,
        mixes: BTreeMap<ModalityId, Tensor>,
        synonyms: BTreeMap<String, usize>,
    ) -> Result<Self> {
        config.validate()?;
        if anchors.shape() != (config.num_classes, config.dim) {
            return Err(OmniBindError::ShapeMismatch {
                op: "world anchors",
                left: anchors.shape(),
                right: (config.num_classes, config.dim),
            });
        }
        Ok(SemanticWorld {
            config,
            anchors,
            lifts,
            mixes,
            synonyms,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn lift(&self, modality: ModalityId) -> &Tensor {
        &self.lifts[&modality]
    }

    pub fn mix(&self, modality: ModalityId) -> &Tensor {
        &self.mixes[&modality]
    }

    pub fn anchor(&self, class: usize) -> Result<&[f64]> {
        if class >= self.config.num_classes {
            return Err(OmniBindError::UnknownClass {
                id: class,
                num_classes: self.config.num_classes,
            });
        }
        Ok(self.anchors.row(class))
    }

    /// Draw one raw feature vector for `(modality, class)`: lift of the class
    /// anchor plus a noise vector of norm sigma.
    pub fn sample_raw(
        &self,
        modality: ModalityId,
        class: usize,
        rng: &mut impl Rng,
    ) -> Result<Tensor> {
        let anchor = self.anchor(class)?.to_vec();
        let sigma = self.config.sigma_for(modality);
        let noise = unit_direction(self.config.dim, rng);
        let mut latent = Tensor::row_vector(&anchor);
        for (l, n) in latent.as_mut_slice().iter_mut().zip(noise.iter()) {
            *l += sigma * n;
        }
        // raw = latent @ lift^T  (1 x feature_dim)
        latent.matmul(&self.lifts[&modality].transpose())
    }

    /// Noise-free raw features whose teacher encoding is exactly the anchor.
    pub fn preimage(&self, modality: ModalityId, class: usize) -> Result<Tensor> {
        let anchor = Tensor::row_vector(self.anchor(class)?);
        anchor.matmul(&self.lifts[&modality].transpose())
    }

    /// Frozen teacher image encoder: project raw features back to the shared
    /// space and normalize. Referentially transparent, no trainable state.
    pub fn encode_teacher_image(&self, raw: &Tensor) -> Result<Tensor> {
        self.encode_teacher(ModalityId::Image, raw)
    }

    /// Frozen projection encoder for any teacher modality.
    pub fn encode_teacher(&self, modality: ModalityId, raw: &Tensor) -> Result<Tensor> {
        if modality.role() != Role::Teacher {
            return Err(OmniBindError::WrongRole {
                modality,
                expected: "teacher",
            });
        }
        let lift = &self.lifts[&modality];
        if raw.cols() != lift.rows() {
            return Err(OmniBindError::DimensionMismatch {
                what: "teacher raw features",
                expected: lift.rows(),
                got: raw.cols(),
            });
        }
        l2_normalize_rows(&raw.matmul(lift)?)
    }

    /// Frozen text encoder over label prompts: anchor plus a deterministic
    /// perturbation derived from the template context, normalized. Identical
    /// calls return identical embeddings.
    pub fn encode_teacher_text(
        &self,
        class_ids: &[usize],
        template: &PromptTemplate,
    ) -> Result<Tensor> {
        if class_ids.is_empty() {
            return Err(OmniBindError::EmptyInput("class ids"));
        }
        let context = template.context();
        let jitter = if context.is_empty() {
            None
        } else {
            let seed = self.config.seed ^ fnv1a(context.as_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(unit_direction(self.config.dim, &mut rng))
        };
        let mut rows = Vec::with_capacity(class_ids.len());
        for &c in class_ids {
            let mut row = self.anchor(c)?.to_vec();
            if let Some(j) = &jitter {
                for (r, jv) in row.iter_mut().zip(j.iter()) {
                    *r += self.config.template_jitter * jv;
                }
            }
            rows.push(row);
        }
        l2_normalize_rows(&Tensor::from_rows(&rows)?)
    }

    /// Label-prompt embeddings for all classes under one template.
    pub fn label_embeddings(&self, template: &PromptTemplate) -> Result<Tensor> {
        let ids: Vec<usize> = (0..self.config.num_classes).collect();
        self.encode_teacher_text(&ids, template)
    }

    /// Frozen student featurizer: invert the lift, then apply the modality's
    /// fixed rotation. The trainable head sees these features.
    pub fn frozen_student_features(&self, modality: ModalityId, raw: &Tensor) -> Result<Tensor> {
        if modality.role() != Role::Student {
            return Err(OmniBindError::WrongRole {
                modality,
                expected: "student",
            });
        }
        let lift = &self.lifts[&modality];
        if raw.cols() != lift.rows() {
            return Err(OmniBindError::DimensionMismatch {
                what: "student raw features",
                expected: lift.rows(),
                got: raw.cols(),
            });
        }
        raw.matmul(lift)?.matmul(&self.mixes[&modality].transpose())
    }
}

/// Trainable two-layer head: feature_dim -> hidden -> dim with a smooth
/// nonlinearity between. The only stage-1 learnable state.
#[derive(Clone, Debug, PartialEq)]
pub struct StudentHead {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl StudentHead {
    /// Small-uniform init (±1/√fan_in): outputs start near-random so
    /// retrieval accuracy begins near chance.
    pub fn init(feature_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let l1 = 1.0 / (feature_dim as f64).sqrt();
        let l2 = 1.0 / (hidden as f64).sqrt();
        StudentHead {
            w1: Tensor::uniform(feature_dim, hidden, l1, rng),
            b1: Tensor::zeros(1, hidden),
            w2: Tensor::uniform(hidden, out_dim, l2, rng),
            b2: Tensor::zeros(1, out_dim),
        }
    }

    /// Head that acts as the identity map: both layers are identity matrices
    /// and the biases shift activations far into the linear region of the
    /// nonlinearity and back.
    pub fn identity_like(dim: usize, shift: f64) -> Self {
        StudentHead {
            w1: Tensor::identity(dim),
            b1: Tensor::zeros(1, dim).map(|_| shift),
            w2: Tensor::identity(dim),
            b2: Tensor::zeros(1, dim).map(|_| -shift),
        }
    }

    pub fn params(&self) -> [&Tensor; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Record the head on a tape. `features` must already be on the tape;
    /// returns (param vars, normalized output embeddings).
    pub fn forward_tape(&self, tape: &mut Tape, features: Var, trainable: bool) -> Result<(Vec<Var>, Var)> {
        let w1 = tape.leaf(self.w1.clone(), trainable);
        let b1 = tape.leaf(self.b1.clone(), trainable);
        let w2 = tape.leaf(self.w2.clone(), trainable);
        let b2 = tape.leaf(self.b2.clone(), trainable);
        let h = tape.matmul(features, w1)?;
        let h = tape.add_bias(h, b1)?;
        let h = tape.gelu(h);
        let h = tape.matmul(h, w2)?;
        let h = tape.add_bias(h, b2)?;
        let out = tape.l2_normalize_rows(h)?;
        Ok((vec![w1, b1, w2, b2], out))
    }

    /// Forward without gradients.
    pub fn forward(&self, features: &Tensor) -> Result<Tensor> {
        let h = features.matmul(&self.w1)?.add_bias(&self.b1)?;
        let h = h.map(tensor::gelu);
        let h = h.matmul(&self.w2)?.add_bias(&self.b2)?;
        l2_normalize_rows(&h)
    }
}

/// Student encoding: frozen featurizer, trainable head, L2 normalization.
pub fn encode_student(
    world: &SemanticWorld,
    modality: ModalityId,
    raw: &Tensor,
    head: &StudentHead,
) -> Result<Tensor> {
    let features = world.frozen_student_features(modality, raw)?;
    head.forward(&features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::cosine;

    fn small_world(seed: u64) -> SemanticWorld {
        let cfg = WorldConfig {
            seed,
            num_classes: 8,
            dim: 16,
            teacher_per_class: 4,
            student_per_class: 4,
            ..WorldConfig::default()
        };
        SemanticWorld::generate(cfg).unwrap()
    }

    #[test]
    fn roles_are_fixed() {
        assert_eq!(ModalityId::Image.role(), Role::Teacher);
        assert_eq!(ModalityId::Text.role(), Role::Teacher);
        for m in ModalityId::STUDENTS {
            assert_eq!(m.role(), Role::Student);
        }
    }

    #[test]
    fn anchors_are_unit_and_separated() {
        let w = small_world(3);
        for i in 0..w.num_classes() {
            assert!((tensor::norm(w.anchors.row(i)) - 1.0).abs() < 1e-9);
            for j in 0..i {
                let c = tensor::dot(w.anchors.row(i), w.anchors.row(j));
                assert!(c.abs() <= 0.5 + 1e-12, "anchors {i},{j} at cos {c}");
            }
        }
    }

    #[test]
    fn lifts_have_orthonormal_columns() {
        let w = small_world(4);
        for m in ModalityId::ALL {
            let l = w.lift(m);
            let gram = l.transpose().matmul(l).unwrap();
            let eye = Tensor::identity(w.dim());
            assert!(gram.max_abs_diff(&eye) < 1e-9, "{m}");
        }
    }

    #[test]
    fn identity_template_returns_normalized_anchor() {
        let w = small_world(5);
        let e = w
            .encode_teacher_text(&[0], &PromptTemplate::identity())
            .unwrap();
        let anchor = l2_normalize_rows(&Tensor::row_vector(w.anchor(0).unwrap())).unwrap();
        assert!(e.max_abs_diff(&anchor) < 1e-12);
    }

    #[test]
    fn text_encoding_is_frozen_deterministic() {
        let w = small_world(6);
        let t = PromptTemplate::photo();
        let a = w.encode_teacher_text(&[1, 3], &t).unwrap();
        let b = w.encode_teacher_text(&[1, 3], &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_templates_stay_close() {
        let w = small_world(7);
        let a = w
            .encode_teacher_text(&[2], &PromptTemplate::photo())
            .unwrap();
        let b = w
            .encode_teacher_text(&[2], &PromptTemplate::new("a sketch of a {label}").unwrap())
            .unwrap();
        assert!(cosine(a.row(0), b.row(0)) >= 0.9);
    }

    #[test]
    fn template_requires_exactly_one_placeholder() {
        assert!(PromptTemplate::new("no placeholder").is_err());
        assert!(PromptTemplate::new("{label} and {label}").is_err());
    }

    #[test]
    fn image_preimage_encodes_to_anchor() {
        let w = small_world(8);
        for c in 0..w.num_classes() {
            let raw = w.preimage(ModalityId::Image, c).unwrap();
            let e = w.encode_teacher_image(&raw).unwrap();
            let anchor = Tensor::row_vector(w.anchor(c).unwrap());
            assert!(e.max_abs_diff(&anchor) < 1e-9);
        }
    }

    #[test]
    fn same_class_image_samples_stay_close() {
        // Sampling oracle: 1000 draw pairs at sigma = 0.05.
        let w = small_world(9);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let c = rng.gen_range(0..w.num_classes());
            let a = w.sample_raw(ModalityId::Image, c, &mut rng).unwrap();
            let b = w.sample_raw(ModalityId::Image, c, &mut rng).unwrap();
            let ea = w.encode_teacher_image(&a).unwrap();
            let eb = w.encode_teacher_image(&b).unwrap();
            assert!(cosine(ea.row(0), eb.row(0)) >= 0.95);
        }
    }

    #[test]
    fn sampling_is_deterministic_under_fixed_seed() {
        let w = small_world(10);
        let mut r1 = ChaCha8Rng::seed_from_u64(42);
        let mut r2 = ChaCha8Rng::seed_from_u64(42);
        let a = w.sample_raw(ModalityId::Touch, 3, &mut r1).unwrap();
        let b = w.sample_raw(ModalityId::Touch, 3, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_sigma_world_classifies_teacher_images_perfectly() {
        let mut cfg = WorldConfig {
            num_classes: 16,
            dim: 32,
            ..WorldConfig::default()
        };
        for m in ModalityId::ALL {
            cfg.sigma.insert(m, 0.0);
        }
        let w = SemanticWorld::generate(cfg).unwrap();
        let labels = w.label_embeddings(&PromptTemplate::identity()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in 0..w.num_classes() {
            let raw = w.sample_raw(ModalityId::Image, c, &mut rng).unwrap();
            let e = w.encode_teacher_image(&raw).unwrap();
            let sims = e.matmul(&labels.transpose()).unwrap();
            let pred = sims
                .row(0)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(pred, c);
        }
    }

    #[test]
    fn identity_head_reproduces_normalized_features() {
        let w = small_world(11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let raw = w.sample_raw(ModalityId::Event, 2, &mut rng).unwrap();
        let features = w
            .frozen_student_features(ModalityId::Event, &raw)
            .unwrap();
        let head = StudentHead::identity_like(w.dim(), 20.0);
        let out = encode_student(&w, ModalityId::Event, &raw, &head).unwrap();
        let want = l2_normalize_rows(&features).unwrap();
        assert!(out.max_abs_diff(&want) < 1e-9);
    }

    #[test]
    fn student_embeddings_are_unit_norm() {
        let w = small_world(13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let head = StudentHead::init(w.dim(), w.config.hidden_dim(), w.dim(), &mut rng);
        for _ in 0..10 {
            let c = rng.gen_range(0..w.num_classes());
            let raw = w.sample_raw(ModalityId::Thermal, c, &mut rng).unwrap();
            let e = encode_student(&w, ModalityId::Thermal, &raw, &head).unwrap();
            assert!((tensor::norm(e.row(0)) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn encode_student_rejects_teacher_modality() {
        let w = small_world(15);
        let head = StudentHead::identity_like(w.dim(), 20.0);
        let raw = Tensor::zeros(1, w.config.feature_dim(ModalityId::Image));
        assert!(matches!(
            encode_student(&w, ModalityId::Image, &raw, &head),
            Err(OmniBindError::WrongRole { .. })
        ));
    }

    #[test]
    fn gradient_reaches_head_but_not_frozen_inputs() {
        // Backward-pass inspection: the frozen featurizer output enters the
        // tape as a constant, so only head parameters accumulate gradient.
        let w = small_world(16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let head = StudentHead::init(w.dim(), w.config.hidden_dim(), w.dim(), &mut rng);
        let raw = w.sample_raw(ModalityId::Touch, 1, &mut rng).unwrap();
        let features = w.frozen_student_features(ModalityId::Touch, &raw).unwrap();

        let mut tape = Tape::new();
        let f = tape.constant(features);
        let (params, out) = head.forward_tape(&mut tape, f, true).unwrap();
        let loss = tape.sum(out);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(f).is_none());
        for p in params {
            assert!(grads.get(p).is_some());
        }
    }

    #[test]
    fn world_generation_is_reproducible() {
        let a = small_world(20);
        let b = small_world(20);
        assert_eq!(a.anchors, b.anchors);
        assert_eq!(a.lift(ModalityId::Audio), b.lift(ModalityId::Audio));
        assert_eq!(a.synonyms, b.synonyms);
    }
}
