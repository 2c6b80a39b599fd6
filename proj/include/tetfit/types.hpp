#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace tetfit
{
    using Index = std::int64_t;

    template <typename Scalar>
    using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

    using Vec3  = Vector3<double>;
    using VecX  = Eigen::VectorXd;
    using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
    using MatX3i = Eigen::Matrix<Index, Eigen::Dynamic, 3, Eigen::RowMajor>;
    using MatX4i = Eigen::Matrix<Index, Eigen::Dynamic, 4, Eigen::RowMajor>;

    enum class ErrorCode
    {
        invalid_argument,
        no_surface,
        empty_surface,
        open_surface,
        diverged,
        unsupported_face,
        io,
    };

    inline const char * to_string(ErrorCode code)
    {
        switch (code)
        {
            case ErrorCode::invalid_argument: return "invalid-argument";
            case ErrorCode::no_surface: return "no-surface";
            case ErrorCode::empty_surface: return "empty-surface";
            case ErrorCode::open_surface: return "open-surface";
            case ErrorCode::diverged: return "diverged";
            case ErrorCode::unsupported_face: return "unsupported-face";
            case ErrorCode::io: return "io";
        }
        return "unknown";
    }

    class Error : public std::runtime_error
    {
    public:
        Error(ErrorCode code, const std::string & message)
            : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
        {
        }

        ErrorCode code() const noexcept { return code_; }

    private:
        ErrorCode code_;
    };

    // Typed indices so a tet id cannot be passed where a vertex id is expected.
    template <typename Tag>
    struct StrongId
    {
        Index value = 0;

        constexpr StrongId() = default;
        constexpr explicit StrongId(Index v) : value(v) {}
        constexpr auto operator<=>(const StrongId &) const = default;
    };

    using TetId    = StrongId<struct TetTag>;
    using VertexId = StrongId<struct VertexTag>;
}
