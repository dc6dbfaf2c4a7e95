#include "agro/errors.hpp"

namespace agro {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::MalformedPlotId: return "MalformedPlotId";
        case Errc::PlotNotFound: return "PlotNotFound";
        case Errc::RegistryUnreachable: return "RegistryUnreachable";
        case Errc::RegistryResponseInvalid: return "RegistryResponseInvalid";
        case Errc::InvalidGeometry: return "InvalidGeometry";
        case Errc::GridParseError: return "GridParseError";
        case Errc::MissingBand: return "MissingBand";
        case Errc::EmptyInput: return "EmptyInput";
        case Errc::GeoreferenceMismatch: return "GeoreferenceMismatch";
        case Errc::NoValidPixels: return "NoValidPixels";
        case Errc::UnsupportedRasterFormat: return "UnsupportedRasterFormat";
        case Errc::EndpointUnreachable: return "EndpointUnreachable";
        case Errc::InvalidStacResponse: return "InvalidStacResponse";
        case Errc::DegenerateGeometry: return "DegenerateGeometry";
        case Errc::WmsUnreachable: return "WmsUnreachable";
        case Errc::WmsError: return "WmsError";
        case Errc::UnexpectedContentType: return "UnexpectedContentType";
        case Errc::EmptyModelResponse: return "EmptyModelResponse";
        case Errc::GatewayTimeout: return "GatewayTimeout";
        case Errc::GatewayHttpError: return "GatewayHttpError";
        case Errc::MalformedCompletion: return "MalformedCompletion";
        case Errc::DimInconsistency: return "DimInconsistency";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::UnknownModelRole: return "UnknownModelRole";
        case Errc::EmbeddingFailed: return "EmbeddingFailed";
        case Errc::DuplicateDocId: return "DuplicateDocIdWithoutReplaceFlag";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::EmptyIndex: return "EmptyIndex";
        case Errc::RerankerFailed: return "RerankerFailed";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::IndexFormatError: return "IndexFormatError";
        case Errc::ModeComponentMismatch: return "ModeComponentMismatch";
        case Errc::VerdictUnparsable: return "VerdictUnparsable";
        case Errc::ScoreOutOfRange: return "ScoreOutOfRange";
        case Errc::MissingDimension: return "MissingDimension";
        case Errc::AllCasesFailed: return "AllCasesFailed";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::ConfigError: return "ConfigError";
        case Errc::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_upstream_failure(Errc code) noexcept {
    switch (code) {
        case Errc::RegistryUnreachable:
        case Errc::RegistryResponseInvalid:
        case Errc::EndpointUnreachable:
        case Errc::InvalidStacResponse:
        case Errc::WmsUnreachable:
        case Errc::WmsError:
        case Errc::UnexpectedContentType:
        case Errc::EmptyModelResponse:
        case Errc::GatewayTimeout:
        case Errc::GatewayHttpError:
        case Errc::MalformedCompletion:
        case Errc::DimInconsistency:
        case Errc::LengthMismatch:
        case Errc::EmbeddingFailed:
        case Errc::RerankerFailed:
            return true;
        default:
            return false;
    }
}

}  // namespace agro
