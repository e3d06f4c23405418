fn main() {
    // Restore default SIGPIPE handling so `ayirt ... | head` dies quietly
    // instead of panicking on the closed pipe.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    std::process::exit(ayirt::cli::run());
}
