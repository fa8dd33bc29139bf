from django.conf import settings

from evsi.case_study import CaseStudyModel, load_model_config
from evsi.decision import estimate_evpi
from evsi.serializers import EvpiSerializer

from ._base import STREAM_EVPI, EvsiBaseCommand


class Command(EvsiBaseCommand):
    help = "EVPI por Monte Carlo simple, por bloques, con errores estándar pareado y entre repeticiones."

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--repetitions', type=int, default=1, help="Repeticiones independientes")

    def build_model(self, config):
        # El EVPI no depende del diseño del estudio
        if config['scenario'] == 'toy':
            return super().build_model(config)
        return CaseStudyModel(config=load_model_config(settings.EVSI['MODEL_CONFIG']))

    def handle(self, *args, **options):
        self.repetitions = options['repetitions']
        return super().handle(*args, **options)

    def run(self, config):
        model = self.build_model(config)
        result = estimate_evpi(
            model, config['evpi_samples'], self.random_source(config, STREAM_EVPI),
            repetitions=self.repetitions,
        )
        self.write(EvpiSerializer, [result], self.output_prefix(config), 'evpi', config)
        self.stdout.write(self.style.SUCCESS(
            f"✅ EVPI = {result.estimate:,.2f} (error estándar {result.std_error:.2f})"
        ))
        return {'converged': True, 'model_evaluations': result.n_samples * result.repetitions}
