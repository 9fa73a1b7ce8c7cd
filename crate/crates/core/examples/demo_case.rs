//! Writes the synthetic head phantom case (two volumes and a pipeline config)
//! into the directory given as the first argument.

fn main() -> std::io::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "demo".into());
    std::fs::create_dir_all(&dir)?;
    let config = cranioforge::phantom::write_demo_case(std::path::Path::new(&dir))?;
    println!("{}", config.display());
    Ok(())
}
