use std::env;
use std::path::PathBuf;

fn main() {
    let crate_dir = env::var("CARGO_MANIFEST_DIR").unwrap();
    let out = PathBuf::from(env::var("OUT_DIR").unwrap()).join("sparsepos.h");

    let config = cbindgen::Config::from_file(PathBuf::from(&crate_dir).join("cbindgen.toml"))
        .expect("cbindgen.toml parses");
    cbindgen::Builder::new()
        .with_crate(&crate_dir)
        .with_config(config)
        .generate()
        .expect("header generation")
        .write_to_file(&out);

    // Keep a copy in the source tree so bindings can be written without a
    // Rust toolchain on the consumer side.
    let tracked = PathBuf::from(&crate_dir).join("include").join("sparsepos.h");
    if let Some(parent) = tracked.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    let _ = std::fs::copy(&out, &tracked);

    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
}
