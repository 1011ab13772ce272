#pragma once

#include <stdexcept>
#include <string>

namespace abslingam {

struct NotADag : std::runtime_error {
    explicit NotADag(const std::string& what) : std::runtime_error(what) {}
};

struct IndexOutOfRange : std::out_of_range {
    explicit IndexOutOfRange(const std::string& what) : std::out_of_range(what) {}
};

struct ShapeMismatch : std::invalid_argument {
    explicit ShapeMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct DimensionMismatch : std::invalid_argument {
    explicit DimensionMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct NotBlockTriangular : std::runtime_error {
    explicit NotBlockTriangular(const std::string& what) : std::runtime_error(what) {}
};

struct SingularBlock : std::runtime_error {
    explicit SingularBlock(const std::string& what) : std::runtime_error(what) {}
};

struct OverlappingBlocks : std::runtime_error {
    explicit OverlappingBlocks(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidAbstraction : std::runtime_error {
    explicit InvalidAbstraction(const std::string& what) : std::runtime_error(what) {}
};

struct ResampleExhausted : std::runtime_error {
    explicit ResampleExhausted(const std::string& what) : std::runtime_error(what) {}
};

struct TooManyEdges : std::invalid_argument {
    explicit TooManyEdges(const std::string& what) : std::invalid_argument(what) {}
};

struct DegenerateColumn : std::runtime_error {
    explicit DegenerateColumn(const std::string& what) : std::runtime_error(what) {}
};

struct SingularRegression : std::runtime_error {
    explicit SingularRegression(const std::string& what) : std::runtime_error(what) {}
};

struct NoPositives : std::runtime_error {
    explicit NoPositives(const std::string& what) : std::runtime_error(what) {}
};

struct NoNegatives : std::runtime_error {
    explicit NoNegatives(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace abslingam
