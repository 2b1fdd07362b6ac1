use clap::Parser;
use singular_lq::cli::{run, CliArgs};

fn main() {
    let args = match CliArgs::try_parse() {
        Ok(a) => a,
        Err(e) => {
            // keep clap's help/version on stdout with code 0; real usage
            // errors exit with the documented code
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(singular_lq::cli::EXIT_USAGE);
            } else {
                print!("{e}");
                std::process::exit(0);
            }
        }
    };
    std::process::exit(run(args));
}
