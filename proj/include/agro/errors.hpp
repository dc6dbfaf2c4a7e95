#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agro {

/// Every failure the library raises carries one of these codes so the HTTP
/// layer and the CLI can map it to a status / exit code without string
/// matching.
enum class Errc {
    // plot registry
    MalformedPlotId,
    PlotNotFound,
    RegistryUnreachable,
    RegistryResponseInvalid,
    InvalidGeometry,
    // raster engine
    GridParseError,
    MissingBand,
    EmptyInput,
    GeoreferenceMismatch,
    NoValidPixels,
    UnsupportedRasterFormat,
    EndpointUnreachable,
    InvalidStacResponse,
    // orthophoto
    DegenerateGeometry,
    WmsUnreachable,
    WmsError,
    UnexpectedContentType,
    EmptyModelResponse,
    // llm gateway
    GatewayTimeout,
    GatewayHttpError,
    MalformedCompletion,
    DimInconsistency,
    LengthMismatch,
    UnknownModelRole,
    // rag store
    EmbeddingFailed,
    DuplicateDocId,
    DimensionMismatch,
    ZeroVector,
    EmptyIndex,
    RerankerFailed,
    OutOfRange,
    IndexFormatError,
    // aggregator
    ModeComponentMismatch,
    // judge
    VerdictUnparsable,
    ScoreOutOfRange,
    MissingDimension,
    AllCasesFailed,
    // generic
    InvalidArgument,
    ConfigError,
    IoError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

/// True for failures of an upstream service (LLM, WMS, STAC, remote registry).
bool is_upstream_failure(Errc code) noexcept;

}  // namespace agro
