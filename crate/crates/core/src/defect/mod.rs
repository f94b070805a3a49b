//! Error seeder: defect specifications, clone assembly, build and launch,
//! and activation evidence.

pub mod activation;
pub mod deploy;
pub mod seed;
pub mod spec;

pub use activation::{read_activation_file, read_activation_log, ActivationLogError};
pub use deploy::{
    build_and_deploy_clone, build_clone, launch, BuildOptions, DeployError, Deployment,
    LaunchOptions,
};
pub use seed::{
    assemble_defect_clone, reversibility_audit, seed_clone, CloneManifest, SeedError, SiteRecord,
    SourceTree, MANIFEST_FILE,
};
pub use spec::{
    load_catalog, parse_defect_spec, Anchor, Category, DefectSpec, PatchSite, SiteKind, SpecError,
};
