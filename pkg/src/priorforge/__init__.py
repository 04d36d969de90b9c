"""priorforge: untrained-network MRI reconstruction on synthetic phantoms."""

from .architectures import (ArchSpec, NetworkInstance, build_conv_decoder,
                            build_deep_decoder, build_encoder_decoder,
                            build_network, count_params, make_noise_input,
                            make_upsampler, parse_arch_name)
from .autodiff import Adam, GraphError, Parameter, Tensor
from .engine import (ReconConfig, ReconData, ReconResult, SelfValConfig,
                     run_reconstruction, split_self_validation)
from .metrics import filter_frequency_response, masked_region_psnr, psnr, ssim
from .mri import (ComplexImage, CoilSensitivities, KSpace, SamplingMask,
                  adjoint_operator, dft2_centered, forward_operator,
                  idft2_centered, rss_combine, zero_filled_recon)
from .phantoms import (MaskSpec, NoiseSpec, PhantomSpec, generate_cartesian_mask,
                       generate_csm, generate_phantom, read_cplx, read_mask,
                       simulate_kspace, write_cplx, write_mask)
from .regularization import (RegConfig, bandlimit_input, gaussian_kernel,
                             l2_penalty, lipschitz_normalize, lipschitz_penalty,
                             matrix_inf_norm, tv_penalty)

__version__ = "0.1.0"
