//! The toy problem's constraints behind the line protocol, for exercising
//! external blackboxes. Reads `x1 x2` per line, writes `f c1 c2`.

use std::io::{self, BufRead, Write};

use auglag_bo::problem::{toy_constraints, toy_objective};

fn main() -> io::Result<()> {
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let line = line?;
        let x: Vec<f64> = match line.split_whitespace().map(str::parse).collect() {
            Ok(x) => x,
            Err(e) => {
                eprintln!("toy-blackbox: bad input `{line}`: {e}");
                std::process::exit(1);
            }
        };
        if x.len() != 2 {
            eprintln!("toy-blackbox: expected 2 coordinates, got {}", x.len());
            std::process::exit(1);
        }
        let c = toy_constraints(&x);
        writeln!(out, "{} {} {}", toy_objective(&x), c[0], c[1])?;
        out.flush()?;
    }
    Ok(())
}
