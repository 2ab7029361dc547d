# Generated by Django 6.0 on 2026-10-19 09:12

import django.db.models.deletion
import uuid
from django.db import migrations, models


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='FitRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('method', models.CharField(choices=[('lpca', 'Logistic PCA (MM)'), ('fantope', 'Logistic PCA (Fantope relaxation)'), ('lsvd', 'Logistic SVD'), ('pca', 'Standard PCA'), ('lpca_cv', 'Logistic PCA, cross-validated m')], max_length=16)),
                ('family', models.CharField(default='bernoulli', max_length=16)),
                ('k', models.FloatField()),
                ('m', models.FloatField(blank=True, null=True)),
                ('n_rows', models.PositiveIntegerField()),
                ('n_cols', models.PositiveIntegerField()),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('converged', models.BooleanField(default=False)),
                ('termination', models.CharField(blank=True, default='', max_length=16)),
                ('elapsed_seconds', models.FloatField(default=0.0)),
                ('final_deviance', models.FloatField(blank=True, null=True)),
                ('deviance_trace', models.JSONField(blank=True, default=list)),
                ('input_path', models.CharField(blank=True, default='', max_length=512)),
                ('model_path', models.CharField(blank=True, default='', max_length=512)),
                ('notes', models.CharField(blank=True, default='', max_length=255)),
            ],
            options={
                'ordering': ['-created_at'],
                'indexes': [models.Index(fields=['method', 'created_at'], name='lpca_fitrun_method_4b1c2e_idx')],
                'constraints': [models.CheckConstraint(condition=models.Q(('k__gt', 0)), name='fitrun_k_positive')],
            },
        ),
        migrations.CreateModel(
            name='SweepRun',
            fields=[
                ('id', models.UUIDField(default=uuid.uuid4, editable=False, primary_key=True, serialize=False)),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('seed', models.BigIntegerField(default=0)),
                ('notes', models.CharField(blank=True, default='', max_length=255)),
            ],
            options={
                'ordering': ['-created_at'],
            },
        ),
        migrations.CreateModel(
            name='SweepCell',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('n', models.PositiveIntegerField()),
                ('d', models.PositiveIntegerField()),
                ('k_true', models.PositiveIntegerField()),
                ('pbar', models.FloatField()),
                ('phi', models.FloatField()),
                ('replicate', models.PositiveIntegerField(default=0)),
                ('method', models.CharField(choices=[('lpca', 'Logistic PCA (MM)'), ('fantope', 'Logistic PCA (Fantope relaxation)'), ('lsvd', 'Logistic SVD'), ('pca', 'Standard PCA'), ('lpca_cv', 'Logistic PCA, cross-validated m')], max_length=16)),
                ('k', models.PositiveIntegerField()),
                ('m', models.FloatField(blank=True, null=True)),
                ('mse', models.FloatField()),
                ('deviance', models.FloatField()),
                ('iterations', models.PositiveIntegerField(default=0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='cells', to='lpca.sweeprun')),
            ],
            options={
                'ordering': ['run', 'id'],
                'indexes': [models.Index(fields=['method', 'k'], name='lpca_sweepc_method_9e07d1_idx')],
            },
        ),
    ]
