#pragma once

#include <stdexcept>
#include <string>

namespace qsd {

// Machine-readable error codes surfaced by the CLI (exit status != 0).
enum class errc {
    negative_rate,
    duplicate_entry,
    not_irreducible,
    self_loop,
    bad_parameters,
    truncation_breaks_irreducibility,
    shift_at_or_above_min_rate,
    no_convergence,
    boundary_decay,
    series_not_resolved,
    kernel_not_stochastic_enough,
    not_recurrent,
    empty_exit_set,
    non_positive_eigenvector,
    degenerate_h,
    boundary_shift,
    too_few_survivors,
    parse_error,
    io_error,
    unsupported_format,
    invalid_argument,
};

inline const char* errc_name(errc c) {
    switch (c) {
        case errc::negative_rate: return "NegativeRate";
        case errc::duplicate_entry: return "DuplicateEntry";
        case errc::not_irreducible: return "NotIrreducible";
        case errc::self_loop: return "SelfLoop";
        case errc::bad_parameters: return "BadParameters";
        case errc::truncation_breaks_irreducibility: return "TruncationBreaksIrreducibility";
        case errc::shift_at_or_above_min_rate: return "ShiftAtOrAboveMinRate";
        case errc::no_convergence: return "NoConvergence";
        case errc::boundary_decay: return "BoundaryDecay";
        case errc::series_not_resolved: return "SeriesNotResolved";
        case errc::kernel_not_stochastic_enough: return "KernelNotStochasticEnough";
        case errc::not_recurrent: return "NotRecurrent";
        case errc::empty_exit_set: return "EmptyExitSet";
        case errc::non_positive_eigenvector: return "NonPositiveEigenvector";
        case errc::degenerate_h: return "DegenerateH";
        case errc::boundary_shift: return "BoundaryShift";
        case errc::too_few_survivors: return "TooFewSurvivors";
        case errc::parse_error: return "ParseError";
        case errc::io_error: return "IoError";
        case errc::unsupported_format: return "UnsupportedFormat";
        case errc::invalid_argument: return "InvalidArgument";
    }
    return "UnknownError";
}

class error : public std::runtime_error {
public:
    error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    errc code() const noexcept { return code_; }
    const char* code_name() const noexcept { return errc_name(code_); }

private:
    errc code_;
};

[[noreturn]] inline void raise(errc code, const std::string& what) { throw error(code, what); }

}  // namespace qsd
