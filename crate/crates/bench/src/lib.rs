//! Fixtures shared by the benchmarks.

use invlim::bundles::{solve_family, BundleParams};
use invlim::conjugacy::RightInverse;
use invlim::smoothing::{partition_of_unity, PartitionOfUnity};
use invlim::{BasicPieceSet, Endomorphism, OrbitSample};

pub struct Fixture {
    pub f: Endomorphism,
    pub sample: OrbitSample,
    pub set: BasicPieceSet,
    pub pu: PartitionOfUnity,
}

impl Fixture {
    pub fn new(f: Endomorphism, density: usize, k: usize) -> Self {
        let sample = OrbitSample::for_system(&f, density, k, k).expect("sample");
        let set = BasicPieceSet::analyze(&f).expect("pieces");
        let pu = partition_of_unity(&sample, set.covers().expect("covers"), 400, 11).expect("partition");
        Self { f, sample, set, pu }
    }

    pub fn right_inverse(&self, delta: f64, tol: f64) -> RightInverse {
        let fam = solve_family(&self.f, &self.sample, &self.set, &self.pu, delta, &BundleParams::default()).expect("bundles");
        RightInverse::new(&self.f, &self.sample, &fam, &self.pu, tol).expect("right inverse")
    }
}
