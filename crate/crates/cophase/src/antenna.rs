//! Synthetic antenna near-field scenario generator.
//!
//! Equivalent sources are tangential Hertzian dipoles on a source sphere;
//! observations are taken by a rigid multi-element probe (L-shaped for
//! `C = 3`, diagonal for `C = 2`) at reference positions on a measurement
//! sphere. Each probe element is itself modeled as a single Hertzian dipole
//! receiving through polarization projection. All lengths are in
//! wavelengths (`lambda = 1`, `k = 2 pi`); the free-space impedance is
//! normalized away since operators only matter up to overall scale.

use nalgebra::Vector3;

use crate::experiments::{derive_seed, gaussian_vector, SolverId, TrialRecord};
use crate::model::{CoherenceLayout, ForwardOperator};
use crate::{CMatrix, Error, Result, C64};

/// Minimum admissible source-probe separation in wavelengths.
pub const MIN_SEPARATION: f64 = 0.1;

const WAVENUMBER: f64 = 2.0 * std::f64::consts::PI;

/// One Hertzian dipole: position and unit polarization.
#[derive(Debug, Clone, Copy)]
pub struct Dipole {
    pub position: Vector3<f64>,
    pub polarization: Vector3<f64>,
}

/// Tangential dipole pairs on the source sphere.
#[derive(Debug, Clone)]
pub struct DipoleSourceSet {
    pub dipoles: Vec<Dipole>,
    pub diameter: f64,
}

impl DipoleSourceSet {
    pub fn len(&self) -> usize {
        self.dipoles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dipoles.is_empty()
    }
}

/// A measurement reference position with its local tangent frame.
#[derive(Debug, Clone, Copy)]
pub struct GridSite {
    pub position: Vector3<f64>,
    /// First tangent vector (also the probe polarization).
    pub e1: Vector3<f64>,
    /// Second tangent vector, orthogonal to `e1` and the radial direction.
    pub e2: Vector3<f64>,
}

/// Reference positions (and frames) on the measurement sphere.
#[derive(Debug, Clone)]
pub struct MeasurementGrid {
    pub sites: Vec<GridSite>,
    pub diameter: f64,
}

/// Rigid probe array layout: element offsets in the local tangent frame.
#[derive(Debug, Clone)]
pub struct ProbeArrayLayout {
    pub offsets: Vec<(f64, f64)>,
}

impl ProbeArrayLayout {
    /// Three elements in an L: reference, one step along `e1`, one step
    /// along `e2`.
    pub fn l_shape(spacing: f64) -> Self {
        Self {
            offsets: vec![(0.0, 0.0), (spacing, 0.0), (0.0, spacing)],
        }
    }

    /// Two elements: reference and the diagonal neighbor.
    pub fn diagonal(spacing: f64) -> Self {
        Self {
            offsets: vec![(0.0, 0.0), (spacing, spacing)],
        }
    }

    pub fn coherent(&self) -> usize {
        self.offsets.len()
    }
}

/// Golden-angle spiral points on a sphere: near-uniform coverage without
/// pole clustering.
fn fibonacci_sphere(count: usize, radius: f64) -> Vec<Vector3<f64>> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            Vector3::new(
                radius * rho * phi.cos(),
                radius * rho * phi.sin(),
                radius * z,
            )
        })
        .collect()
}

/// Spherical tangent frame at `position`: `(theta_hat, phi_hat)`.
fn tangent_frame(position: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let radial = position.normalize();
    let rho = (radial.x * radial.x + radial.y * radial.y).sqrt();
    if rho < 1e-12 {
        // at a pole any tangent pair works
        return (Vector3::x(), Vector3::y());
    }
    let phi_hat = Vector3::new(-radial.y / rho, radial.x / rho, 0.0);
    let theta_hat = Vector3::new(radial.z * radial.x / rho, radial.z * radial.y / rho, -rho);
    (theta_hat, phi_hat)
}

/// Place `n` tangential dipoles (two orthogonal polarizations per location,
/// so `n` must be even) on a sphere of the given diameter.
pub fn build_source_sphere(diameter_wavelengths: f64, n: usize) -> Result<DipoleSourceSet> {
    if !n.is_multiple_of(2) {
        return Err(Error::OddSourceCount(n));
    }
    let locations = fibonacci_sphere(n / 2, diameter_wavelengths / 2.0);
    let mut dipoles = Vec::with_capacity(n);
    for position in locations {
        let (theta_hat, phi_hat) = tangent_frame(&position);
        dipoles.push(Dipole {
            position,
            polarization: theta_hat,
        });
        dipoles.push(Dipole {
            position,
            polarization: phi_hat,
        });
    }
    Ok(DipoleSourceSet {
        dipoles,
        diameter: diameter_wavelengths,
    })
}

/// Place `m` reference sites with tangent frames on the measurement sphere.
pub fn build_measurement_grid(diameter_wavelengths: f64, m: usize) -> Result<MeasurementGrid> {
    let positions = fibonacci_sphere(m, diameter_wavelengths / 2.0);
    // probe placements at different sites must not coincide
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            if (positions[i] - positions[j]).norm() < 1e-9 * diameter_wavelengths.max(1.0) {
                return Err(Error::CoincidentProbePositions { a: i, b: j });
            }
        }
    }
    let sites = positions
        .into_iter()
        .map(|position| {
            let (e1, e2) = tangent_frame(&position);
            GridSite { position, e1, e2 }
        })
        .collect();
    Ok(MeasurementGrid {
        sites,
        diameter: diameter_wavelengths,
    })
}

/// Exact free-space Hertzian dipole electric field (all `1/r`, `1/r^2`,
/// `1/r^3` terms), for a unit dipole moment along `polarization` located at
/// `source`, observed at `observation`.
pub fn dipole_field(
    source: &Vector3<f64>,
    polarization: &Vector3<f64>,
    observation: &Vector3<f64>,
) -> Vector3<C64> {
    let separation = observation - source;
    let r = separation.norm();
    let r_hat = separation / r;
    let k = WAVENUMBER;

    let radial_component = polarization.dot(&r_hat);
    let transverse = polarization - r_hat * radial_component;
    let longitudinal = r_hat * (3.0 * radial_component) - polarization;

    let phase = C64::from_polar(1.0, -k * r);
    let far = C64::new(k * k / r, 0.0);
    let near = C64::new(1.0 / (r * r * r), k / (r * r));

    Vector3::new(
        phase * (far * transverse.x + near * longitudinal.x),
        phase * (far * transverse.y + near * longitudinal.y),
        phase * (far * transverse.z + near * longitudinal.z),
    )
}

/// Assemble the forward operator mapping source dipole coefficients to
/// probe-element observations. Row `m + c*M` holds probe element `c` at
/// site `m`, following the coherent-group index convention.
pub fn build_dipole_operator(
    sources: &DipoleSourceSet,
    grid: &MeasurementGrid,
    probe: &ProbeArrayLayout,
) -> Result<(ForwardOperator, CoherenceLayout)> {
    let m_sites = grid.sites.len();
    let c_elements = probe.coherent();
    let n = sources.len();
    let layout = CoherenceLayout::new(m_sites, c_elements)?;

    let mut matrix = CMatrix::zeros(m_sites * c_elements, n);
    for (c, &(du, dv)) in probe.offsets.iter().enumerate() {
        for (m, site) in grid.sites.iter().enumerate() {
            let probe_point = site.position + site.e1 * du + site.e2 * dv;
            let probe_pol = site.e1;
            let row = m + c * m_sites;
            for (k, dipole) in sources.dipoles.iter().enumerate() {
                let distance = (probe_point - dipole.position).norm();
                if distance <= MIN_SEPARATION {
                    return Err(Error::SourceProbeCollision {
                        distance,
                        minimum: MIN_SEPARATION,
                    });
                }
                let field = dipole_field(&dipole.position, &dipole.polarization, &probe_point);
                matrix[(row, k)] =
                    field.x * probe_pol.x + field.y * probe_pol.y + field.z * probe_pol.z;
            }
        }
    }

    let op = ForwardOperator::new(matrix, layout)?;
    Ok((op, layout))
}

/// Probe choice for the scenario runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    /// Two diagonal elements, `C = 2`.
    Diagonal,
    /// Three elements in an L, `C = 3`.
    LShape,
}

impl ProbeKind {
    pub fn layout(&self, spacing: f64) -> ProbeArrayLayout {
        match self {
            ProbeKind::Diagonal => ProbeArrayLayout::diagonal(spacing),
            ProbeKind::LShape => ProbeArrayLayout::l_shape(spacing),
        }
    }

    pub fn coherent(&self) -> usize {
        match self {
            ProbeKind::Diagonal => 2,
            ProbeKind::LShape => 3,
        }
    }
}

/// Configuration of a synthetic antenna run.
#[derive(Debug, Clone)]
pub struct AntennaConfig {
    /// Number of source dipoles (even).
    pub n_unknowns: usize,
    /// Number of measurement sites.
    pub groups: usize,
    pub probe: ProbeKind,
    pub noise: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub solvers: Vec<SolverId>,
    pub source_diameter: f64,
    pub measurement_diameter: f64,
    pub probe_spacing: f64,
}

impl AntennaConfig {
    /// Desk-scale defaults matching the paper's geometry ratios: source
    /// sphere 5 wavelengths, measurement sphere 8, probe spacing 1.
    pub fn desk_scale(probe: ProbeKind) -> Self {
        Self {
            n_unknowns: 200,
            groups: 200,
            probe,
            noise: 1e-3,
            trials: 50,
            master_seed: 0,
            solvers: vec![SolverId::SvdQ, SolverId::SvdR],
            source_diameter: 5.0,
            measurement_diameter: 8.0,
            probe_spacing: 1.0,
        }
    }
}

/// Build the scenario operator once and run the configured trials: each
/// trial draws a random excitation vector, synthesizes noisy observations
/// and runs every selected solver on the identical data.
pub fn run_antenna_scenario(config: &AntennaConfig) -> Result<Vec<TrialRecord>> {
    if config.trials == 0 || config.solvers.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let sources = build_source_sphere(config.source_diameter, config.n_unknowns)?;
    let grid = build_measurement_grid(config.measurement_diameter, config.groups)?;
    let probe = config.probe.layout(config.probe_spacing);
    let (op, layout) = build_dipole_operator(&sources, &grid, &probe)?;

    let mut records = Vec::new();
    for trial in 0..config.trials {
        let seed = derive_seed(config.master_seed, 0, trial as u64);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let xi = gaussian_vector(&mut rng, config.n_unknowns);
        let b_clean = op.apply(&xi)?;
        let noise_spec =
            crate::model::NoiseSpec::new(config.noise, seed.wrapping_mul(0x9e37_79b9))?;
        let b_noisy = crate::model::add_noise(&b_clean, &noise_spec)?;
        let obs = crate::model::PartialObservations::observe(layout, &b_noisy)?;
        let instance = crate::experiments::TrialInstance {
            op: op.clone(),
            xi,
            b_clean,
            b_noisy,
            obs,
        };

        for &solver in &config.solvers {
            let mut record = TrialRecord {
                solver,
                n_unknowns: config.n_unknowns,
                groups: config.groups,
                coherent: config.probe.coherent(),
                noise: config.noise,
                seed,
                rd: f64::NAN,
                success: false,
                gap: f64::NAN,
                psi_fluctuation: f64::NAN,
                seconds: 0.0,
                error: None,
            };
            let started = std::time::Instant::now();
            match crate::experiments::solve_instance(&instance, solver) {
                Ok(solved) => {
                    record.seconds = started.elapsed().as_secs_f64();
                    record.gap = solved.gap;
                    record.psi_fluctuation = solved.psi_fluctuation;
                    match crate::model::relative_deviation(&instance.op, &solved.x, &instance.xi) {
                        Ok(rd) => {
                            record.rd = rd;
                            record.success = crate::model::success(rd, config.noise);
                        }
                        Err(e) => record.error = Some(e.to_string()),
                    }
                }
                Err(e) => {
                    record.seconds = started.elapsed().as_secs_f64();
                    record.error = Some(e.to_string());
                }
            }
            records.push(record);
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_sphere_rejects_odd_counts() {
        assert!(matches!(
            build_source_sphere(5.0, 7),
            Err(Error::OddSourceCount(7))
        ));
    }

    #[test]
    fn source_sphere_two_dipoles_single_location() {
        let set = build_source_sphere(5.0, 2).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.dipoles[0].position, set.dipoles[1].position);
        let dot = set.dipoles[0]
            .polarization
            .dot(&set.dipoles[1].polarization);
        assert!(dot.abs() < 1e-14);
    }

    #[test]
    fn polarizations_are_tangential_unit_vectors() {
        let set = build_source_sphere(5.0, 200).unwrap();
        for dipole in &set.dipoles {
            let radial = dipole.position.normalize();
            assert!(dipole.polarization.dot(&radial).abs() <= 1e-14);
            assert!((dipole.polarization.norm() - 1.0).abs() <= 1e-14);
            assert!((dipole.position.norm() - 2.5).abs() <= 1e-12);
        }
    }

    #[test]
    fn spiral_spacing_is_near_uniform() {
        let set = build_source_sphere(5.0, 200).unwrap();
        let positions: Vec<_> = set.dipoles.iter().step_by(2).map(|d| d.position).collect();
        // brute-force nearest neighbor distances
        let radius: f64 = 2.5;
        let count = positions.len() as f64;
        let uniform_estimate = (4.0 * std::f64::consts::PI * radius * radius / count).sqrt();
        for (i, p) in positions.iter().enumerate() {
            let nearest = positions
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| (p - q).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(
                nearest > uniform_estimate / 2.0 && nearest < uniform_estimate * 2.0,
                "nearest {nearest}, uniform {uniform_estimate}"
            );
        }
    }

    #[test]
    fn measurement_frames_are_orthonormal() {
        let grid = build_measurement_grid(8.0, 37).unwrap();
        assert_eq!(grid.sites.len(), 37);
        for site in &grid.sites {
            let radial = site.position.normalize();
            assert!(site.e1.dot(&site.e2).abs() < 1e-14);
            assert!(site.e1.dot(&radial).abs() < 1e-14);
            assert!(site.e2.dot(&radial).abs() < 1e-14);
            assert!((site.e1.norm() - 1.0).abs() < 1e-14);
            assert!((site.e2.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn single_site_grid_works() {
        let grid = build_measurement_grid(8.0, 1).unwrap();
        assert_eq!(grid.sites.len(), 1);
        let site = &grid.sites[0];
        assert!((site.position.norm() - 4.0).abs() < 1e-12);
        assert!(site.e1.dot(&site.e2).abs() < 1e-14);
    }

    #[test]
    fn boresight_field_matches_scalar_oracle() {
        // dipole along z at origin, observation on the x axis at r = 10:
        // E = p exp(-jkr) (k^2/r - 1/r^3 - jk/r^2), purely z-polarized
        let source = Vector3::new(0.0, 0.0, 0.0);
        let pol = Vector3::new(0.0, 0.0, 1.0);
        let obs = Vector3::new(10.0, 0.0, 0.0);
        let field = dipole_field(&source, &pol, &obs);

        let k = WAVENUMBER;
        let r: f64 = 10.0;
        let expected =
            C64::from_polar(1.0, -k * r) * C64::new(k * k / r - 1.0 / (r * r * r), -k / (r * r));
        assert!(field.x.norm() < 1e-15);
        assert!(field.y.norm() < 1e-15);
        assert!((field.z - expected).norm() <= 1e-12 * expected.norm());
    }

    #[test]
    fn coupling_is_reciprocal() {
        let p1 = Vector3::new(0.3, -0.2, 0.93).normalize();
        let p2 = Vector3::new(-0.5, 0.8, 0.1).normalize();
        let a = Vector3::new(0.0, 0.5, -0.25);
        let b = Vector3::new(3.0, -1.0, 2.0);
        let forward = dipole_field(&a, &p1, &b);
        let backward = dipole_field(&b, &p2, &a);
        let coupling_ab = forward.x * p2.x + forward.y * p2.y + forward.z * p2.z;
        let coupling_ba = backward.x * p1.x + backward.y * p1.y + backward.z * p1.z;
        assert!((coupling_ab - coupling_ba).norm() <= 1e-12 * coupling_ab.norm());
    }

    #[test]
    fn far_field_decays_as_inverse_distance() {
        let source = Vector3::new(0.0, 0.0, 0.0);
        let pol = Vector3::new(0.0, 0.0, 1.0);
        let r1: f64 = 1000.0;
        let r2 = 2000.0;
        let f1 = dipole_field(&source, &pol, &Vector3::new(r1, 0.0, 0.0));
        let f2 = dipole_field(&source, &pol, &Vector3::new(r2, 0.0, 0.0));
        let ratio = f1.z.norm() / f2.z.norm();
        assert!((ratio - 2.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn operator_rows_follow_group_convention() {
        let sources = build_source_sphere(5.0, 20).unwrap();
        let grid = build_measurement_grid(8.0, 7).unwrap();
        let probe = ProbeArrayLayout::l_shape(1.0);
        let (op, layout) = build_dipole_operator(&sources, &grid, &probe).unwrap();
        assert_eq!(layout.groups(), 7);
        assert_eq!(layout.coherent(), 3);
        assert_eq!(op.matrix().nrows(), 21);
        assert_eq!(op.n_unknowns(), 20);

        // row m and m+M belong to the same site: reference element row uses
        // the site position itself
        let site = &grid.sites[3];
        let dipole = &sources.dipoles[5];
        let field = dipole_field(&dipole.position, &dipole.polarization, &site.position);
        let expected = field.x * site.e1.x + field.y * site.e1.y + field.z * site.e1.z;
        assert!((op.matrix()[(3, 5)] - expected).norm() < 1e-14);
    }

    #[test]
    fn rigid_rotation_preserves_singular_values() {
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(Vector3::new(1.0, 2.0, -0.5)),
            0.7,
        );
        let sources = build_source_sphere(5.0, 16).unwrap();
        let grid = build_measurement_grid(8.0, 9).unwrap();
        let probe = ProbeArrayLayout::diagonal(1.0);
        let (op, _) = build_dipole_operator(&sources, &grid, &probe).unwrap();

        let rotated_sources = DipoleSourceSet {
            dipoles: sources
                .dipoles
                .iter()
                .map(|d| Dipole {
                    position: rotation * d.position,
                    polarization: rotation * d.polarization,
                })
                .collect(),
            diameter: sources.diameter,
        };
        let rotated_grid = MeasurementGrid {
            sites: grid
                .sites
                .iter()
                .map(|s| GridSite {
                    position: rotation * s.position,
                    e1: rotation * s.e1,
                    e2: rotation * s.e2,
                })
                .collect(),
            diameter: grid.diameter,
        };
        let (rotated_op, _) =
            build_dipole_operator(&rotated_sources, &rotated_grid, &probe).unwrap();

        let sv_a = op.matrix().clone().svd(false, false).singular_values;
        let sv_b = rotated_op
            .matrix()
            .clone()
            .svd(false, false)
            .singular_values;
        for i in 0..sv_a.len() {
            assert!(
                (sv_a[i] - sv_b[i]).abs() <= 1e-10 * sv_a[0],
                "sigma {i}: {} vs {}",
                sv_a[i],
                sv_b[i]
            );
        }
    }

    #[test]
    fn collision_is_detected() {
        let sources = build_source_sphere(5.0, 8).unwrap();
        // a hand-built site sitting on top of the first source location
        let position = sources.dipoles[0].position;
        let (e1, e2) = tangent_frame(&position);
        let grid = MeasurementGrid {
            sites: vec![GridSite { position, e1, e2 }],
            diameter: 5.0,
        };
        let probe = ProbeArrayLayout::diagonal(1.0);
        let result = build_dipole_operator(&sources, &grid, &probe);
        assert!(matches!(result, Err(Error::SourceProbeCollision { .. })));
    }
}
