use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = PathBuf::from(env::var("CARGO_MANIFEST_DIR").unwrap());
    let out_dir = PathBuf::from(env::var("OUT_DIR").unwrap());

    let bindings = cbindgen::generate(&crate_dir).expect("cbindgen header generation failed");
    bindings.write_to_file(out_dir.join("teleop.h"));
    // Keep a copy at a stable path for consumers of the source tree.
    bindings.write_to_file(crate_dir.join("include").join("teleop.h"));

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
